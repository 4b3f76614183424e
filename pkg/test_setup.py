# test_setup.py
import numpy as np
import pandas as pd
import scipy
import statsmodels
import statsmodels.api as sm
import tqdm
from scipy.special import ellipk
from sklearn.linear_model import LinearRegression


def test_imports():
    assert callable(ellipk)
    assert hasattr(sm, "WLS")
    assert LinearRegression().fit_intercept


if __name__ == "__main__":
    test_imports()
    print("All imports successful!")
    print(f"NumPy version: {np.__version__}")
    print(f"SciPy version: {scipy.__version__}")
    print(f"Pandas version: {pd.__version__}")
    print(f"statsmodels version: {statsmodels.__version__}")
    print(f"tqdm version: {tqdm.__version__}")
