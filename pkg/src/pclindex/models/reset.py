"""A project that is not PCL-indexable: activation can lower future resource use.

States in ``[0, 1]``. Idle: ``x -> sqrt(x)``, drifting up to ``1``. Active:
``x -> clip(5x - 3, 0, 1)``, which keeps high states high and sends states
below ``0.6`` to the idle fixed point ``0``. No reward; activation costs
``0.1`` per period.

From ``x = 0.6`` under the 0.5-threshold policy, activating now lands at ``0``
and idles forever, whereas idling now climbs above the threshold and stays
active forever, so ``g(0.6, 0.5) = 0.1 - 0.9 = -0.8`` at ``beta = 0.9``.
"""

from __future__ import annotations

import numpy as np

from ..model import BanditModel, Branch, FiniteMixtureKernel, StateInterval, WeightBound, constant


def reset_model(beta: float = 0.9, cost: float = 0.1) -> BanditModel:
    kernel = FiniteMixtureKernel(
        passive=(Branch(constant(1.0), lambda x: np.sqrt(np.asarray(x, float))),),
        active=(Branch(constant(1.0), lambda x: np.clip(5.0 * np.asarray(x, float) - 3.0, 0.0, 1.0)),),
    )
    return BanditModel(
        states=StateInterval(0.0, 1.0),
        reward=lambda x, a: np.zeros(np.shape(x)),
        cost=lambda x, a: np.full(np.shape(x), cost * a),
        kernel=kernel,
        discount=beta,
        weight_bound=WeightBound(M=cost, gamma=beta),
        name="reset",
        params=dict(beta=beta, cost=cost),
    )
