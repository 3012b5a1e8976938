import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def random_tt(rng, d, rank):
    """A dense random TT with uniform interior rank."""
    from ttqmc.tensor_train import TensorTrain

    shapes = []
    for m in range(d):
        rl = 1 if m == 0 else rank
        rr = 1 if m == d - 1 else rank
        shapes.append((rl, 2, rr))
    return TensorTrain([rng.standard_normal(s) for s in shapes])


def random_positive_product(rng, d):
    """An entrywise-positive product state (no sign problem)."""
    from ttqmc.tensor_train import ProductState

    return ProductState(np.exp(0.5 * rng.standard_normal((d, 2))))
