import numpy as np
import pytest
from hypothesis import given, strategies as st

from mlcert.certifier import BASELINE, MULTIGUARD, NO_JOINT, CertifiedResult
from mlcert.evaluation import (
    MetricsRow,
    ResultsFileError,
    aggregate,
    config_hash,
    default_r_grid,
    instance_metrics,
    parse_r_grid,
    read_metrics_file,
    read_results_file,
    sweep,
    write_metrics_file,
    write_results_file,
)
from mlcert.sampler import CertificationInstance, SmoothingConfig, count_frequencies
from mlcert.synthetic_model import random_problem


def synthetic_instances(count, seed=0, k=3):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        clf, x, gt, _ = random_problem(rng, 0.5, k_prime=1, k=k)
        out.append(count_frequencies(clf, [x], SmoothingConfig(n=1000, seed=seed, k=k), gt, f"s{len(out)}"))
    return out


class TestInstanceMetrics:
    def test_zero(self):
        assert instance_metrics(0, 3, 2) == (0, 0, 0)

    def test_perfect(self):
        assert instance_metrics(3, 3, 3) == (1, 1, 1)

    def test_arithmetic(self):
        p, r, f = instance_metrics(2, 4, 3)
        assert (p, r, f) == pytest.approx((2 / 3, 1 / 2, 4 / 7), abs=1e-12)

    def test_rejects_oversized(self):
        with pytest.raises(ValueError):
            instance_metrics(3, 2, 5)
        with pytest.raises(ValueError):
            instance_metrics(1, 0, 1)


class TestGrid:
    def test_default(self):
        grid = default_r_grid()
        assert grid[0] == 0.0 and grid[-1] == 2.0 and len(grid) == 41

    def test_list(self):
        assert parse_r_grid("0,0.25,1") == [0.0, 0.25, 1.0]

    @pytest.mark.parametrize("spec", ["1:0:0.1", "0:1:0", "a:b:c", "0.5,0.1", "", "-1,0"])
    def test_invalid(self, spec):
        with pytest.raises(ValueError):
            parse_r_grid(spec)


class TestAggregate:
    def test_constant_rows(self):
        res = [CertifiedResult("a", R, 1, MULTIGUARD, 2, 3) for R in (0.0, 0.5)]
        rows = aggregate(res)
        assert [(r.certified_precision, r.certified_recall, r.certified_f1) for r in rows] == \
            [(1 / 3, 0.5, 0.4)] * 2

    def test_sorted_by_mode_then_radius(self):
        res = [CertifiedResult("a", R, 0, m, 1, 1) for m in (NO_JOINT, BASELINE, MULTIGUARD) for R in (1.0, 0.0)]
        assert [(r.mode, r.R) for r in aggregate(res)] == sorted((m, R) for m in (NO_JOINT, BASELINE, MULTIGUARD)
                                                                   for R in (0.0, 1.0))

    def test_requires_sizes(self):
        with pytest.raises(ValueError):
            aggregate([CertifiedResult("a", 0.0, 0, MULTIGUARD)])

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate([])

    @given(st.lists(st.tuples(st.integers(1, 5), st.integers(1, 5), st.data()), min_size=1, max_size=12),
           st.integers(1, 11))
    def test_linearity(self, raw, split):
        res = []
        for i, (d, k, data) in enumerate(raw):
            e = data.draw(st.integers(0, min(d, k)))
            res.append(CertifiedResult(f"i{i}", 0.5, e, MULTIGUARD, d, k))
        split = min(split, len(res))
        whole = aggregate(res)[0]
        if split == len(res):
            return
        a, b = aggregate(res[:split])[0], aggregate(res[split:])[0]
        na, nb = a.num_instances, b.num_instances
        for field in ("certified_precision", "certified_recall", "certified_f1"):
            mixed = (getattr(a, field) * na + getattr(b, field) * nb) / (na + nb)
            assert getattr(whole, field) == pytest.approx(mixed, abs=1e-12)


class TestSweep:
    def test_saturated(self):
        inst = CertificationInstance("sat", 5, 1, 1000, (0,), (1000, 0, 0, 0, 0))
        rows = sweep([inst], SmoothingConfig(k=1), [0.0, 0.5, 1.0])
        assert all(r.certified_precision == r.certified_recall == r.certified_f1 == 1.0 for r in rows)

    def test_empty(self):
        with pytest.raises(ValueError):
            sweep([], SmoothingConfig(), [0.0])

    def test_unsorted_grid(self):
        inst = CertificationInstance("a", 2, 1, 10, (0,), (10, 0))
        with pytest.raises(ValueError):
            sweep([inst], SmoothingConfig(k=1), [0.5, 0.1])

    def test_joint_dominates_and_curves_fall(self):
        insts = synthetic_instances(100)
        grid = default_r_grid()
        rows = sweep(insts, SmoothingConfig(k=3), grid, (MULTIGUARD, NO_JOINT))
        by_mode = {m: [r for r in rows if r.mode == m] for m in (MULTIGUARD, NO_JOINT)}
        for mg, nj in zip(by_mode[MULTIGUARD], by_mode[NO_JOINT]):
            assert mg.R == nj.R
            assert mg.certified_precision >= nj.certified_precision
            assert mg.certified_recall >= nj.certified_recall
            assert mg.certified_f1 >= nj.certified_f1
        for mode_rows in by_mode.values():
            for field in ("certified_precision", "certified_recall", "certified_f1"):
                vals = [getattr(r, field) for r in mode_rows]
                assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestFiles:
    def test_results_round_trip(self, tmp_path):
        res = [CertifiedResult("a,b", 0.1 * i, i % 2, MULTIGUARD, 2, 3) for i in range(5)]
        write_results_file(res, tmp_path / "r.csv", {"x": 1})
        assert read_results_file(tmp_path / "r.csv") == res

    def test_metrics_round_trip(self, tmp_path):
        rows = [MetricsRow(0.5, MULTIGUARD, 0.25, 0.5, 1 / 3, 7)]
        write_metrics_file(rows, tmp_path / "m.csv")
        back = read_metrics_file(tmp_path / "m.csv")[0]
        assert back.certified_f1 == pytest.approx(1 / 3, abs=1e-10) and back.num_instances == 7

    def test_empty_results_rejected(self, tmp_path):
        write_results_file([], tmp_path / "r.csv")
        with pytest.raises(ResultsFileError, match="no records"):
            read_results_file(tmp_path / "r.csv")

    def test_bad_row_reports_line_and_id(self, tmp_path):
        path = tmp_path / "r.csv"
        write_results_file([CertifiedResult("ok", 0.0, 1, MULTIGUARD, 2, 3)], path)
        with open(path, "a") as fh:
            fh.write("bad,multiguard,0.1,9,2,3\n")
        with pytest.raises(ResultsFileError, match="line 4 .*'bad'"):
            read_results_file(path)

    def test_wrong_header(self, tmp_path):
        (tmp_path / "r.csv").write_text("id,mode\n")
        with pytest.raises(ResultsFileError, match="line 1"):
            read_results_file(tmp_path / "r.csv")

    def test_config_hash_stable(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})
