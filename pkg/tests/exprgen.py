"""Random expression trees for property tests."""

import numpy as np
from hypothesis import strategies as st

from relforce import expr as ex

VARS = ("x", "y")
CONSTS = (0.5, 1.0, 1.5, 2.0, 3.0)
EXPONENTS = (2.0, 3.0, -1.0, 0.5)


def random_expr(rng: np.random.Generator, depth: int = 4) -> ex.Expr:
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.6:
            return ex.Var(VARS[rng.integers(len(VARS))])
        return ex.Const(CONSTS[rng.integers(len(CONSTS))])
    kind = rng.integers(4)
    if kind == 0:
        return ex.Neg(random_expr(rng, depth - 1))
    if kind == 1:
        return ex.Call(ex.FUNCTIONS[rng.integers(len(ex.FUNCTIONS))], random_expr(rng, depth - 1))
    if kind == 2:
        return ex.BinOp("^", random_expr(rng, depth - 1), ex.Const(EXPONENTS[rng.integers(len(EXPONENTS))]))
    op = "+-*/"[rng.integers(4)]
    return ex.BinOp(op, random_expr(rng, depth - 1), random_expr(rng, depth - 1))


leaves = st.one_of(
    st.sampled_from(VARS).map(ex.Var),
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False).map(ex.Const),
)


def _extend(children):
    return st.one_of(
        children.map(ex.Neg),
        st.builds(ex.Call, st.sampled_from(ex.FUNCTIONS), children),
        st.builds(ex.BinOp, st.sampled_from("+-*/^"), children, children),
    )


expressions = st.recursive(leaves, _extend, max_leaves=12)
