import numpy as np
import pytest

from pcstar.network import Cpt, Dag, Dataset, JointTable, Variable, binary_variables


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


def chain3():
    """X1 -> X2 -> X3 over binary variables."""
    return Dag(binary_variables(3), [(0, 1), (1, 2)])


def collider3():
    """X1 -> X3 <- X2."""
    return Dag(binary_variables(3), [(0, 2), (1, 2)])


def root_net(probs):
    """Single-variable network with the given state distribution."""
    probs = np.asarray(probs, dtype=float)
    v = (Variable(0, "X1", probs.size),)
    return Dag(v, []), Cpt(0, (), probs.reshape(-1, 1))


def random_joint(n_vars, rng):
    """Dirichlet(1) joint over n binary variables."""
    variables = binary_variables(n_vars)
    probs = rng.dirichlet(np.ones(2**n_vars)).reshape((2,) * n_vars)
    return JointTable(variables, probs)


def ci_joint(n_z, rng):
    """Binary joint over (x, z..., y) with x and y exactly independent given z.

    Built as P(z) * P(x | z) * P(y | z); variable order matches the test
    fragment layout (x first, y last).
    """
    n = n_z + 2
    variables = binary_variables(n)
    qz = 2**n_z
    pz = rng.dirichlet(np.ones(qz)) if n_z else np.ones(1)
    px = rng.random(qz)
    py = rng.random(qz)
    probs = np.zeros((2,) * n)
    for j in range(qz):
        z_states = tuple((j >> (n_z - 1 - i)) & 1 for i in range(n_z))
        for xs in range(2):
            for ys in range(2):
                p_x = px[j] if xs == 0 else 1.0 - px[j]
                p_y = py[j] if ys == 0 else 1.0 - py[j]
                probs[(xs, *z_states, ys)] = pz[j] * p_x * p_y
    return JointTable(variables, probs)


def dataset_from_rows(rows, arities=None):
    rows = np.asarray(rows, dtype=np.int64)
    n_vars = rows.shape[1] if rows.ndim == 2 else 0
    if arities is None:
        variables = binary_variables(n_vars)
    else:
        variables = tuple(Variable(i, f"X{i + 1}", a) for i, a in enumerate(arities))
    return Dataset(variables, rows)
