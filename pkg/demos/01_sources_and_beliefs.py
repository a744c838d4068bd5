# %% [markdown]
# Coupled sources and the sink's belief
#
# Two binary sources either flip independently or jump together to
# all-zeros / all-ones. The mix is controlled by lambda.

# %%
import numpy as np

from coupled_tracking import (SourceParams, condition_and_predict, marginalize, ml_estimate,
                              partial_kernel, predict, stationary_distribution)
from coupled_tracking.sources import bit_table

params = SourceParams(k=2, p=0.8, theta=0.5, lam=0.4)
P = partial_kernel(params)
np.set_printoptions(precision=4, suppress=True)
print("configurations (source 1 is the high bit):")
print(bit_table(2))
print("joint kernel:")
print(P)
print("row sums:", P.sum(axis=1))

# %% [markdown]
# Coupling pushes mass onto the agreeing configurations 00 and 11.

# %%
for lam in (0.0, 0.4, 0.8, 1.0):
    pi = stationary_distribution(partial_kernel(SourceParams(2, 0.8, 0.5, lam)))
    print(f"lambda={lam:.1f}  stationary={pi}")

# %% [markdown]
# Without a reception the belief is only predicted. A delivered bit first
# restricts the belief to configurations consistent with it.

# %%
b = stationary_distribution(P)
print("idle:", predict(b, P))
heard = condition_and_predict(b, 0, 1, P)   # source 1 reported a 1
print("after X1=1:", heard)
print("marginals:", marginalize(heard))
print("estimate:", ml_estimate(marginalize(heard)))

# %% [markdown]
# Under coupling, news about source 1 also moves the estimate of source 2.

# %%
for lam in (0.0, 0.8):
    Pl = partial_kernel(SourceParams(2, 0.8, 0.5, lam))
    m = marginalize(condition_and_predict(stationary_distribution(Pl), 0, 1, Pl))
    print(f"lambda={lam}: P(X2=1 | X1=1 heard) = {m[1, 1]:.4f}")
