import numpy as np
import pytest

from secembed.region import AuxChannel, SystemSpec
from secembed.tables import Axis, DistTable, DistortionMeasure

U = Axis("U", 2)
UHAT = Axis("Uhat", 2)
Y2 = Axis("Y", 2)
Z2 = Axis("Z", 2)


def binary_spec(
    x_size=2,
    k_probs=(0.5, 0.5),
    lam=1.0,
    attack=None,
    d_cost=None,
    x_probs=None,
    xk_joint=None,
):
    """Small binary-ish system; defaults to uniform independent everything
    with Hamming distortions and an identity attack."""
    X = Axis("X", x_size)
    K = Axis("K", len(k_probs))
    if xk_joint is None:
        xp = np.asarray(x_probs) if x_probs is not None else np.full(x_size, 1.0 / x_size)
        xk_joint = np.outer(xp, k_probs)
    att = np.eye(2) if attack is None else np.asarray(attack)
    d = (
        DistortionMeasure(X, Y2, d_cost)
        if d_cost is not None
        else DistortionMeasure(X, Y2, 1.0 - np.eye(x_size, 2))
    )
    return SystemSpec(
        p_u=DistTable([U], [0.5, 0.5]),
        p_xk=DistTable([X, K], xk_joint),
        p_z_given_y=DistTable([Y2, Z2], att, given=("Y",)),
        lam=lam,
        d=d,
        d_prime=DistortionMeasure.hamming(U, UHAT),
    )


def copy_embedder_aux(spec, v_probs):
    """V ~ v_probs independent of (K, X), and Y a copy of V."""
    V = Axis("V", len(v_probs))
    vals = np.zeros((spec.k_axis.size, spec.x_axis.size, len(v_probs), spec.y_axis.size))
    for v, p in enumerate(v_probs):
        vals[:, :, v, v] = p
    return AuxChannel(
        DistTable([spec.k_axis, spec.x_axis, V, spec.y_axis], vals, given=("K", "X"))
    )


def noise_aux(spec, y_probs):
    """|V| = 1 and Y drawn from y_probs independently of everything."""
    V = Axis("V", 1)
    vals = np.zeros((spec.k_axis.size, spec.x_axis.size, 1, spec.y_axis.size))
    vals[:, :, 0, :] = np.asarray(y_probs)
    return AuxChannel(
        DistTable([spec.k_axis, spec.x_axis, V, spec.y_axis], vals, given=("K", "X"))
    )


@pytest.fixture
def trend_spec():
    """Degenerate covertext, uniform binary key and message, message rate
    half the covertext rate; used for the error-decay runs."""
    return binary_spec(x_size=1, lam=0.5, d_cost=[[0.0, 1.0]])


@pytest.fixture
def trend_aux(trend_spec):
    return copy_embedder_aux(trend_spec, [0.5, 0.5])
