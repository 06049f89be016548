from hypothesis import given
from hypothesis import strategies as st

from coopeig.seeding import child_seed, keyed_rng, keyed_uniform


class TestChildSeed:
    def test_deterministic(self):
        assert child_seed(1, "graph") == child_seed(1, "graph")

    def test_tag_separation(self):
        assert child_seed(1, "graph") != child_seed(1, "matrix")

    def test_index_separation(self):
        assert child_seed(1, "mlp-data", 0) != child_seed(1, "mlp-data", 1)

    @given(st.integers(0, 2**32), st.integers(0, 2**32))
    def test_master_separation(self, a, b):
        if a != b:
            assert child_seed(a, "t") != child_seed(b, "t")


class TestKeyedUniform:
    def test_range_and_reproducibility(self):
        u = keyed_uniform(3, "edge-failure", 7, 0, 1)
        assert 0.0 <= u < 1.0
        assert u == keyed_uniform(3, "edge-failure", 7, 0, 1)

    def test_distinct_keys_distinct_draws(self):
        draws = {keyed_uniform(3, "edge-failure", k, 0, 1) for k in range(100)}
        assert len(draws) == 100


class TestKeyedRng:
    def test_stream_reproducible(self):
        a = keyed_rng(5, "noise", 2).normal(size=4)
        b = keyed_rng(5, "noise", 2).normal(size=4)
        assert (a == b).all()
