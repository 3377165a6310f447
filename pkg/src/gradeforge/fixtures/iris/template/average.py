import pandas as pd

# read csv file
# find the average of petal width
# round off to 2 decimal places and print
