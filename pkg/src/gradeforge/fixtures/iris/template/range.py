import pandas as pd

# read csv file
# find the range (max - min) of petal width
# round off to 2 decimal places and print
