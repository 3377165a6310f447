"""gradeforge: self-hosted autograding for programming courses.

Untrusted student programs run in a resource-limited sandbox and are graded
against declarative test suites (per-test points, substring/exact/regex
output comparison).  A small HTTP service plus CLI cover the full assignment
lifecycle: template, accept, submit, grade, dashboard, grade export and
similarity screening.
"""

__version__ = "0.1.0"
