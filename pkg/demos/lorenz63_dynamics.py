"""From noisy Lorenz-63 samples to a vector field and a forecast.

Step 1 fits derivative and trajectory with a narrow Gaussian time kernel. Step 2
learns the vector field nonparametrically from the fitted pairs and
integrates it forward. Step 3 hands the same fitted pairs to SINDy, which
knows the right-hand side is a quadratic polynomial.

Takes a few seconds. Run with ``python demos/lorenz63_dynamics.py``.
"""

from __future__ import annotations

import numpy as np

from odefit.baselines import poly_library, stls
from odefit.bench import relative_l2_error, sindy_parameters
from odefit.derivfit import TimeSeries, fit
from odefit.dynlearn import field_relative_l2, learn, predict
from odefit.kernels import KernelSpec
from odefit.systems import DEFAULT_X0, add_noise, integrate, make_system

system = make_system("lorenz63")
x0 = np.array(DEFAULT_X0["lorenz63"])
n, t_end, delta = 1000, 10.0, 0.1
times = np.arange(1, n + 1) * (t_end / n)
clean = integrate(system, x0, times)
ts = TimeSeries(times, add_noise(clean, delta, seed=0), x0=x0)

f = fit(ts, KernelSpec("gaussian", 0.04))
print(f"trajectory error {relative_l2_error(f.fitted_trajectory, clean):.3e}, "
      f"derivative error {relative_l2_error(f.fitted_derivatives, system(clean)):.3e}")

model = learn(f.fitted_trajectory, f.fitted_derivatives, KernelSpec("gaussian", 100.0))
# the bounding box includes corners the trajectory never visits, where
# the field is extrapolated
lo, hi = clean.min(axis=0), clean.max(axis=0)
err = field_relative_l2(model, system, np.column_stack([lo, hi]), n_grid=20_000)
print(f"learned field: lambda* = {model.lambda_star:.3e}, error over the data box {err:.3e}")

# the attractor is chaotic, so only a short horizon is meaningful
horizon = predict(model, clean[-1], (t_end, t_end + 0.5), 50)
ref = integrate(system, clean[-1], horizon.times, t0=t_end)
print(f"0.5 time-unit forecast error {relative_l2_error(horizon.values, ref):.3e}")

theta, idx = poly_library(f.fitted_trajectory, 2)
res = stls(theta, f.fitted_derivatives, threshold=0.1)
est, names = sindy_parameters("lorenz63", res.coefficients, idx)
true = np.array([system.parameters[k] for k in names])
for name, e, t in zip(names, est, true):
    print(f"SINDy {name:5s} {e:9.4f}  (true {t:.4f})")
