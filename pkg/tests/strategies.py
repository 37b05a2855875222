"""Shared hypothesis strategies."""
import numpy as np
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def matrices(draw, rows=(1, 6), cols=None):
    r = draw(st.integers(*rows))
    c = r if cols is None else draw(st.integers(*cols))
    return draw(arrays(np.float64, (r, c), elements=finite))


@st.composite
def spanning_facets(draw, dim=(2, 4), extra=(0, 6)):
    """Seeded random facet set guaranteed to span."""
    n = draw(st.integers(*dim))
    k = n + draw(st.integers(*extra))
    seed = draw(st.integers(0, 2**32 - 1))
    F = np.random.default_rng(seed).standard_normal((k, n))
    return F
