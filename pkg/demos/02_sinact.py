"""The SinAct activation next to a sigmoid.

SinAct is exactly 0 below 0 and exactly 1 above 1, with its steepest slope
(2) at the 0.5 decision threshold. A sigmoid never reaches 0 or 1.
"""
import numpy as np

from lesion_ensemble import sigmoid, sinact, sinact_deriv

xs = np.array([-0.5, 0.0, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 1.0, 1.5])
print("    x   SinAct  SinAct'  sigmoid(x-0.5)")
for x in xs:
    print(f"{x:5.2f}  {sinact(x):7.4f}  {sinact_deriv(x):7.4f}  {sigmoid(x - 0.5):14.4f}")

grid = np.linspace(0, 1, 1001)
print("max |H(x) + H(1-x) - 1| on [0, 1]:", float(np.max(np.abs(sinact(grid) + sinact(1 - grid) - 1))))
