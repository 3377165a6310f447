import pandas as pd
import numpy as np
from sklearn.model_selection import train_test_split
from sklearn.linear_model import LinearRegression

df = pd.read_csv("iris.csv")
X = df[["petal_length"]]
y = df["petal_width"]
X_train, X_test, y_train, y_test = train_test_split(X, y, test_size=0.3, random_state=0)

model = LinearRegression()
model.fit(X_train, y_train)
b = round(float(model.intercept_), 2)
a = round(float(model.coef_[0]), 2)

new_pw = 5.3  # new x value

new_pl = a * new_pw + b
print(round(new_pl, 2))
