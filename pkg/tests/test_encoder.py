import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skillmem.corpus import Dataset, Interaction, QMatrix
from skillmem.encoder import (DEFAULT_WINDOWS, ModelSpec, WindowSet,
                              encode_dataset, feature_layout, load_design,
                              save_design, window_counts)
from skillmem.errors import ConfigError, EncodingError
from skillmem.synth import SynthConfig, make_synthetic

DEFAULT = WindowSet()


def brute_force_window_counts(history, query_time, windows):
    """Independent oracle: plain linear scan over the history list."""
    attempts, wins = [], []
    for w in windows.widths:
        a = sum(1 for t, _ in history if query_time - t < w)
        c = sum(1 for t, corr in history if query_time - t < w and corr)
        attempts.append(a)
        wins.append(c)
    return tuple(attempts), tuple(wins)


class TestWindowCounts:
    def test_empty_history(self):
        a, c = window_counts([], 5.0, DEFAULT)
        assert a == (0, 0, 0, 0, 0)
        assert c == (0, 0, 0, 0, 0)

    def test_two_attempts(self):
        # elapsed 2 and 1.5 days against widths {1/24, 1, 7, 30, inf}
        hist = [(0.0, 1), (0.5, 0)]
        a, c = window_counts(hist, 2.0, DEFAULT)
        assert a == (0, 0, 2, 2, 2)
        assert c == (0, 0, 1, 1, 1)
        assert (a, c) == brute_force_window_counts(hist, 2.0, DEFAULT)[0:2]

    def test_three_wins(self):
        hist = [(0.0, 1), (1.5, 1), (1.99, 1)]
        a, c = window_counts(hist, 2.0, DEFAULT)
        assert a == (1, 2, 3, 3, 3)
        assert c == a

    def test_strict_boundary(self):
        # elapsed exactly one width is outside that window
        hist = [(0.0, 1)]
        a, _ = window_counts(hist, 1.0, DEFAULT)
        assert a == (0, 0, 1, 1, 1)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 50), st.booleans()), max_size=40),
           st.floats(0, 60))
    def test_matches_oracle(self, raw, extra):
        raw.sort(key=lambda p: p[0])
        hist = [(t, int(c)) for t, c in raw]
        query = (hist[-1][0] if hist else 0.0) + extra
        assert window_counts(hist, query, DEFAULT) == \
            brute_force_window_counts(hist, query, DEFAULT)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 50), st.booleans()), max_size=40),
           st.floats(0, 10))
    def test_nesting(self, raw, extra):
        raw.sort(key=lambda p: p[0])
        hist = [(t, int(c)) for t, c in raw]
        query = (hist[-1][0] if hist else 0.0) + extra
        a, c = window_counts(hist, query, DEFAULT)
        assert list(a) == sorted(a) and list(c) == sorted(c)
        assert all(ci <= ai for ai, ci in zip(a, c))


class TestWindowSet:
    def test_not_increasing(self):
        with pytest.raises(ConfigError):
            WindowSet((1.0, 1.0, math.inf))

    def test_missing_inf(self):
        with pytest.raises(ConfigError):
            WindowSet((1.0, 7.0))


class TestModelSpec:
    def test_mirtb_needs_dim(self):
        with pytest.raises(ConfigError):
            ModelSpec("mirtb", 0)

    def test_irt_dim_zero_only(self):
        with pytest.raises(ConfigError):
            ModelSpec("irt", 5)

    def test_unknown_family(self):
        with pytest.raises(ConfigError):
            ModelSpec("dkt", 0)


class TestLayout:
    def test_das3h_size(self):
        lay = feature_layout(ModelSpec("das3h", 0), (2, 3, 2))
        assert lay.n_features == 2 + 3 + 2 + 2 * (2 * 5)
        assert lay.blocks["wins"] == (7, 10)

    def test_irt_size(self):
        lay = feature_layout(ModelSpec("irt", 0), (10, 7, 1))
        assert lay.n_features == 17

    def test_shared_vs_per_skill_gap(self):
        S, J, K, W = 4, 6, 3, 5
        full = feature_layout(ModelSpec("das3h", 0), (S, J, K)).n_features
        shared = feature_layout(ModelSpec("das3h_1p", 0), (S, J, K)).n_features
        assert full - shared == 2 * W * (K - 1)

    def test_blocks_tile(self):
        for fam in ("irt", "afm", "pfa", "dash_items", "das3h", "das3h_1p",
                    "das3h_plaincounts"):
            lay = feature_layout(ModelSpec(fam, 0), (4, 6, 3))
            offsets = sorted(lay.blocks.values())
            pos = 0
            for off, size in offsets:
                assert off == pos
                pos += size
            assert pos == lay.n_features

    def test_zero_dim_error(self):
        with pytest.raises(ConfigError):
            feature_layout(ModelSpec("das3h", 0), (0, 3, 2))


def _toy_dataset():
    """One student, one single-skill item, two attempts 0.5 days apart."""
    qm = QMatrix([("i1", "k1")])
    rows = [Interaction("u1", "i1", 0.0, 1, ("k1",)),
            Interaction("u1", "i1", 0.5, 0, ("k1",))]
    return Dataset({"u1": rows}, qm, preprocessed=True)


class TestEncodeDataset:
    def test_first_interaction_all_history_zero(self, fixture_dataset):
        dm = encode_dataset(fixture_dataset, ModelSpec("das3h", 0))
        lay = dm.layout
        seen = set()
        for i in range(dm.n_rows):
            s = dm.students[i]
            if s in seen:
                continue
            seen.add(s)
            row = dm.row(i)
            for j in row.indices:
                assert lay.block_of(j) in ("users", "items", "skills")

    def test_second_row_win_features(self):
        dm = encode_dataset(_toy_dataset(), ModelSpec("das3h", 0))
        row = dm.row(1)
        lay = dm.layout
        vals = {int(j): v for j, v in zip(row.indices, row.values)}
        w_off = lay.offset("wins")
        a_off = lay.offset("attempts")
        # elapsed 0.5 days: in windows {1, 7, 30, inf}, not 1/24
        expected = [0.0] + [math.log(2)] * 4
        for w in range(5):
            assert vals.get(w_off + w, 0.0) == pytest.approx(expected[w])
            assert vals.get(a_off + w, 0.0) == pytest.approx(expected[w])

    def test_single_skill_1p_equals_das3h_values(self):
        ds = _toy_dataset()
        full = encode_dataset(ds, ModelSpec("das3h", 0))
        shared = encode_dataset(ds, ModelSpec("das3h_1p", 0))
        for i in range(full.n_rows):
            assert np.allclose(np.sort(full.row(i).values),
                               np.sort(shared.row(i).values))

    def test_missing_item_error(self):
        qm = QMatrix([("i1", "k1")])
        rows = [Interaction("u1", "i2", 0.0, 1, ())]
        ds = Dataset({"u1": rows}, qm, preprocessed=True)
        with pytest.raises(EncodingError, match="i2"):
            encode_dataset(ds, ModelSpec("irt", 0))

    def test_determinism(self, fixture_dataset):
        a = encode_dataset(fixture_dataset, ModelSpec("das3h", 0))
        b = encode_dataset(fixture_dataset, ModelSpec("das3h", 0))
        assert (a.X != b.X).nnz == 0
        assert np.array_equal(a.y, b.y)


def recompute_row_from_scratch(dataset, spec, student, row_pos):
    """No-leakage oracle: rebuild one row's features using only the rows
    strictly before it in the student's stream."""
    from skillmem.encoder import _Counter, build_layout, encode_row

    layout = build_layout(spec, dataset)
    rows = dataset.interactions[student]
    counters = {}
    for r in rows[:row_pos]:
        if spec.family == "dash_items":
            keys = [("item", student, r.item)]
        else:
            keys = [("skill", student, k)
                    for k in sorted(dataset.qmatrix.skills_of(r.item))]
        for key in keys:
            counters.setdefault(key, _Counter()).push(r.timestamp, r.correct)
    r = rows[row_pos]
    skills = sorted(dataset.qmatrix.skills_of(r.item))
    skill_idx = {k: i for i, k in enumerate(layout.skills)}
    return encode_row(r, skills, layout, spec, counters,
                      layout.students.index(student),
                      layout.items.index(r.item), skill_idx)


@pytest.mark.parametrize("family", ["das3h", "das3h_1p", "dash_kc",
                                    "dash_items", "pfa", "afm"])
def test_no_leakage(fixture_dataset, family):
    spec = ModelSpec(family, 0)
    dm = encode_dataset(fixture_dataset, spec)
    rng = np.random.default_rng(0)
    picks = rng.choice(dm.n_rows, size=20, replace=False)
    pos_in_student = {}
    for i in range(dm.n_rows):
        s = dm.students[i]
        pos_in_student[i] = pos_in_student.get(("n", s), 0)
        pos_in_student[("n", s)] = pos_in_student[i] + 1
    for i in picks:
        i = int(i)
        idx, val = recompute_row_from_scratch(
            fixture_dataset, spec, dm.students[i], pos_in_student[i])
        row = dm.row(i)
        assert np.array_equal(idx, row.indices)
        assert np.allclose(val, row.values)


def test_nesting_monotonicity_on_fixture(fixture_dataset):
    spec = ModelSpec("das3h", 0)
    dm = encode_dataset(fixture_dataset, spec)
    lay = dm.layout
    W = len(spec.windows)
    for i in range(dm.n_rows):
        row = dm.row(i)
        vals = {int(j): v for j, v in zip(row.indices, row.values)}
        for block in ("wins", "attempts"):
            off = lay.offset(block)
            for k in range(len(lay.skills)):
                series = [vals.get(off + k * W + w, 0.0) for w in range(W)]
                assert series == sorted(series)


def test_1p_is_skill_sum_of_das3h(fixture_dataset):
    """Each shared-window feature equals the sum over the item's skills of
    the per-skill feature values."""
    full = encode_dataset(fixture_dataset, ModelSpec("das3h", 0))
    shared = encode_dataset(fixture_dataset, ModelSpec("das3h_1p", 0))
    W = 5
    for i in range(full.n_rows):
        fr, sr = full.row(i), shared.row(i)
        fvals = {int(j): v for j, v in zip(fr.indices, fr.values)}
        svals = {int(j): v for j, v in zip(sr.indices, sr.values)}
        for block in ("wins", "attempts"):
            foff = full.layout.offset(block)
            soff = shared.layout.offset(block)
            for w in range(W):
                total = sum(fvals.get(foff + k * W + w, 0.0)
                            for k in range(len(full.layout.skills)))
                assert svals.get(soff + w, 0.0) == pytest.approx(total)


def test_plaincounts_match_pfa_blocks(fixture_dataset):
    """The plain-counts ablation carries exactly the PFA win/fail values."""
    abl = encode_dataset(fixture_dataset, ModelSpec("das3h_plaincounts", 0))
    pfa = encode_dataset(fixture_dataset, ModelSpec("pfa", 0))
    for i in range(abl.n_rows):
        ar, pr = abl.row(i), pfa.row(i)
        avals = {int(j): v for j, v in zip(ar.indices, ar.values)}
        pvals = {int(j): v for j, v in zip(pr.indices, pr.values)}
        for block in ("wins", "fails"):
            aoff = abl.layout.offset(block)
            poff = pfa.layout.offset(block)
            for k in range(len(abl.layout.skills)):
                assert avals.get(aoff + k, 0.0) == pvals.get(poff + k, 0.0)


def test_design_roundtrip(tmp_path, fixture_dataset):
    dm = encode_dataset(fixture_dataset, ModelSpec("das3h", 0))
    path = str(tmp_path / "design.txt")
    save_design(dm, path)
    back = load_design(path)
    assert (dm.X != back.X).nnz == 0
    assert np.array_equal(dm.y, back.y)
    assert back.spec.family == "das3h"
    assert back.layout.blocks == dm.layout.blocks
