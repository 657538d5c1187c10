import json
import math

import numpy as np
import pytest

from caplab.errors import ConfigError
from caplab.harness import (
    CaseRecord,
    SuiteConfig,
    SuiteReport,
    resolve_jobs,
    richardson,
    ring_sequence,
    run_suites,
    three_spheres_checks,
    verify_metric_axioms,
    verify_monotonicity,
    verify_polarization,
    verify_roundness,
    verify_three_spheres,
)
from caplab.metric import OptConfig

FAST = OptConfig(m=2, restarts=0)


def small(**kw):
    return SuiteConfig(preset="small", opt=FAST, **kw)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            SuiteConfig(preset="huge")
        with pytest.raises(ConfigError):
            SuiteConfig(dim=4)
        with pytest.raises(ConfigError):
            SuiteConfig(cases=0)
        with pytest.raises(ConfigError):
            SuiteConfig(slack=-0.1)
        with pytest.raises(ConfigError):
            SuiteConfig(n_exp=5)

    def test_resolved_fills_defaults(self):
        c = SuiteConfig(preset="small", dim=3).resolved("polarization")
        assert c.cells == 17 and c.n_exp == 3 and c.slack == 0.02 and c.cases == 20
        c = SuiteConfig(cells=40, n_exp=3, slack=0.1).resolved("monotonicity")
        assert c.cells == 40 and c.n_exp == 3 and c.slack == 0.1

    def test_resolve_jobs(self, monkeypatch):
        monkeypatch.delenv("MODMETRIC_JOBS", raising=False)
        assert resolve_jobs(None) == 1
        assert resolve_jobs(3) == 3
        monkeypatch.setenv("MODMETRIC_JOBS", "4")
        assert resolve_jobs(None) == 4
        assert resolve_jobs(2) == 2
        monkeypatch.setenv("MODMETRIC_JOBS", "many")
        with pytest.raises(ConfigError):
            resolve_jobs(None)
        with pytest.raises(ConfigError):
            resolve_jobs(0)

    def test_unknown_suite(self):
        with pytest.raises(ConfigError, match="unknown suite"):
            run_suites(["nope"])


class TestRecords:
    def test_pass_rule(self):
        assert CaseRecord(0, "c", {}, 1.0, 1.0, -0.01, 0.02).passed
        assert not CaseRecord(0, "c", {}, 1.0, 1.0, -0.03, 0.02).passed
        assert CaseRecord(0, "c", {}, 1.0, 1.0, 0.0, 0.0).passed
        assert CaseRecord(0, "c", {}, math.nan, math.nan, math.nan, 0.0, skipped=True).passed is None

    def test_digest_depends_on_inputs(self):
        a = CaseRecord(0, "c", {"x": [1, 2]}, 0, 0, 0, 0)
        b = CaseRecord(5, "d", {"x": [1, 2]}, 1, 1, 1, 1)
        c = CaseRecord(0, "c", {"x": [1, 3]}, 0, 0, 0, 0)
        assert a.digest == b.digest != c.digest

    def test_report(self):
        recs = [
            CaseRecord(0, "ok", {"a": 1}, 1.0, 2.0, 0.5, 0.0),
            CaseRecord(1, "bad", {"a": 2}, 3.0, 2.0, -0.5, 0.0),
            CaseRecord(2, "ok", {"a": 3}, math.nan, math.nan, math.nan, 0.0, skipped=True, note="why"),
        ]
        rep = SuiteReport("demo", {"seed": 0}, recs, 0.1)
        assert not rep.passed
        assert rep.pass_count == 1 and len(rep.evaluated) == 2 and len(rep.skipped) == 1
        assert rep.worst_margin == -0.5
        d = json.loads(rep.to_json())
        assert d["passed"] is False and d["records"][2]["passed"] is None
        table = rep.table()
        assert "FAIL case 1 bad" in table and '"a": 2' in table

    def test_all_skipped_is_not_a_pass(self):
        rep = SuiteReport("demo", {}, [CaseRecord(0, "c", {}, 0, 0, 0, 0, skipped=True)])
        assert not rep.passed

    def test_skipped_required_check_fails_suite(self):
        recs = [CaseRecord(0, "a", {}, 1, 1, 0.0, 0.0),
                CaseRecord(0, "b", {}, 0, 0, 0, 0, skipped=True, required=True, note="unresolvable")]
        rep = SuiteReport("demo", {}, recs)
        assert not rep.passed
        assert "MISSING case 0 b" in rep.table()


class TestRichardson:
    def test_removes_first_order_error(self):
        exact = 2.5
        vals = [exact - 0.4 / n for n in (16, 32, 64)]
        assert richardson(vals) == pytest.approx(exact, rel=1e-12)

    def test_second_order(self):
        vals = [1.0 + 3.0 / n**2 for n in (8, 16)]
        assert richardson(vals, order=2) == pytest.approx(1.0, rel=1e-12)

    def test_ring_sequence_approaches_oracle(self):
        seq = ring_sequence(2, 33, levels=3)
        oracle = 2 * math.pi / math.log(2)
        hs = [h for h, _ in seq]
        errs = [abs(c / oracle - 1) for _, c in seq]
        assert hs[0] == pytest.approx(2 * hs[1]) == pytest.approx(4 * hs[2])
        assert errs[0] > errs[1] > errs[2]
        assert abs(richardson([c for _, c in seq]) / oracle - 1) < errs[2]


class TestSuites:
    def test_three_spheres(self):
        rep = verify_three_spheres()
        assert rep.passed, rep.table()
        assert len(rep.evaluated) > 1000

    def test_three_spheres_catches_bad_tolerance(self):
        recs = three_spheres_checks([0.5], [0.3, 1.0], tol=-1.0)
        assert any(not r.passed for r in recs)

    def test_polarization_small(self):
        rep = verify_polarization(small(cases=4))
        assert rep.passed, rep.table()
        sup = rep.select("polarization-supersampled")
        assert len(sup) == 4 and all(r.required for r in sup)

    def test_empty_center_polarization_is_skipped_not_passed(self):
        rep = verify_polarization(small(cases=8))
        empty = [r for r in rep.select("polarization") if r.skipped]
        assert empty and all("empty" in r.note for r in empty)
        assert all(r.lhs > 0 for r in rep.select("polarization-supersampled"))

    def test_polarization_3d_p3(self):
        rep = verify_polarization(SuiteConfig(preset="small", dim=3, cases=2))
        assert rep.passed, rep.table()
        assert all(r.inputs["n_exp"] == 3 for r in rep.evaluated)

    def test_monotonicity_small(self):
        rep = verify_monotonicity(small(cases=3))
        assert rep.passed, rep.table()
        assert rep.select("strict-gap") and rep.select("equal-condensers")

    def test_metric_axioms_small(self):
        rep = verify_metric_axioms(small(cases=1))
        assert rep.passed, rep.table()
        checks = {r.check for r in rep.evaluated}
        assert {"symmetry", "triangle", "identity", "positivity", "boundary-growth"} <= checks

    def test_roundness_small_grid_cannot_claim_pass(self):
        rep = verify_roundness(small(directions=8))
        final = rep.select("roundness-final")
        assert final and final[0].skipped and final[0].required
        assert not rep.passed

    def test_deterministic(self):
        a = verify_polarization(small(cases=2, seed=3))
        b = verify_polarization(small(cases=2, seed=3))
        assert [r.to_dict() for r in a.records] == [r.to_dict() for r in b.records]
        c = verify_polarization(small(cases=2, seed=4))
        assert [r.digest for r in a.records] != [r.digest for r in c.records]

    def test_parallel_matches_sequential(self):
        a = verify_polarization(small(cases=3, seed=1, jobs=1))
        b = verify_polarization(small(cases=3, seed=1, jobs=2))
        assert [r.to_dict() for r in a.records] == [r.to_dict() for r in b.records]

    def test_records_replay_inputs(self):
        rep = verify_polarization(small(cases=1, seed=2))
        r = rep.evaluated[0]
        assert {"domain", "plate_vertices", "sphere", "n_exp"} <= set(r.inputs)
        np.testing.assert_array_equal(np.asarray(r.inputs["plate_vertices"]).shape[1], 2)
