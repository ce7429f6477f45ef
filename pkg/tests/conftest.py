import numpy as np

from lieripm.constraints import BoxBlock, Block, InitialVecBlock
from lieripm.costs import ChordalCostBlock, QuadCostBlock
from lieripm.nlp import NLPProblem, VariableLayout

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)


class LinearBlock(Block):
    """``a . x - b`` on one Euclidean slot (test helper)."""

    linear = True
    dim = 1
    family = "linear"

    def __init__(self, slots, a, b):
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)
        self.kinds = (len(self.a),)
        super().__init__(slots)

    def evaluate(self, vals, order=2):
        return np.array([self.a @ vals[0] - self.b]), self.a[None], None


def scalar_problem():
    L = VariableLayout()
    L.add_vec("x", 1)
    P = NLPProblem(L)
    P.add_cost(QuadCostBlock((0,), [0.0], [[2.0]]))  # x^2
    return P


def ineq_toy(x0=5.0):
    """``min x^2  s.t.  x >= 1``; solution ``x = 1, z = 2``."""
    P = scalar_problem()
    P.add_ineq(BoxBlock((0,), [1.0], [np.inf]))
    x = P.layout.zero_point()
    x.vec[:] = x0
    return P, x


def eq_toy(x0=5.0):
    """``min x^2  s.t.  x - 1 = 0``; solution ``x = 1, y = -2``."""
    P = scalar_problem()
    P.add_eq(InitialVecBlock((0,), [1.0]))
    x = P.layout.zero_point()
    x.vec[:] = x0
    return P, x


def rotation_toy(R0, R_d, W=None):
    L = VariableLayout()
    L.add_rot("R")
    P = NLPProblem(L)
    P.add_cost(ChordalCostBlock((0,), R_d, np.eye(3) if W is None else W))
    x = L.zero_point()
    x[0] = R0
    return P, x
