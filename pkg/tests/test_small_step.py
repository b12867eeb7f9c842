import math
from fractions import Fraction

import numpy as np
import pytest

from poissona2 import large_step as ls
from poissona2 import simplex_walk as sw
from poissona2 import small_step as ss


@pytest.fixture(scope="module")
def surrogate1():
    return ls.assemble_F(ls.SurrogateRuleset(4.0, 1), 1)


@pytest.fixture(scope="module")
def surrogate2():
    return ls.assemble_F(ls.SurrogateRuleset(4.0, 2), 2)


def run(F, d, **kw):
    return ss.transform(F, ss.TransformConfig(d, **kw))


def test_constant_F():
    F = ls.assemble_F(ls.ConstantRuleset(np.diag([2.0, 0.5])), 1)
    res = run(F, 2)
    leaf = res.kind != ss.WALK
    assert np.all(res.values == F.tree.levels[0][0])
    _, cert, _ = ss.build_T(res, F)
    assert cert.ok
    assert ss.verify_pullback(F, res).max_deviation == 0
    a = ss.smoothness_and_a2_audit(F, 2, 0.5)
    assert a.s_dyadic_W == pytest.approx(1) and a.a2_tilde == pytest.approx(a.a2_F)
    assert leaf.any()
    with pytest.raises(ZeroDivisionError):
        ss.damage_ratio(F, res)


def test_d1_tetrahedra_are_single_steps(surrogate1):
    res = run(surrogate1, 1)
    for fr in res.frames:
        if not fr.is_segment:
            assert fr.cap == 1 and np.array_equal(fr.hit_probability, np.full(4, 0.25))
    assert ss.verify_pullback(surrogate1, res).max_deviation == 0


@pytest.mark.parametrize("d", [1, 2])
def test_mass_accounting(surrogate2, d):
    res = run(surrogate2, d)
    for L in surrogate2.fam.E:
        assert abs(res.I_mass[L] - L.length) <= res.tail + 1e-15
    for K in surrogate2.fam.all_F:
        assert res.J_mass[K] <= K.length + 1e-15
    # node masses of stopped and frozen leaves fill the unit interval
    leaf = res.kind != ss.WALK
    assert res.mass[leaf].sum() == pytest.approx(1, abs=1e-12)


def test_remap(surrogate1):
    # a fixed cap keeps the segment walk, and so the enumeration, small
    res = run(surrogate1, 1, cap=8)
    entries, cert, complete = ss.build_T(res, surrogate1)
    assert complete and cert.ok
    assert cert.max_deviation <= 10 * res.tail + 1e-15
    for e in entries[:50]:
        assert e(e.source.left) == e.target.left and e(e.source.right) == e.target.right
        assert e.scale == Fraction(e.target.length) / Fraction(e.source.length)
    covered = {}
    for e in entries:
        covered[e.target] = covered.get(e.target, 0) + e.source.length
    for L, m in covered.items():
        assert m == pytest.approx(res.I_mass[L], abs=1e-15)
    assert ss.remap_csv(entries[:1]).splitlines()[0] == "M_level,M_index,L_level,L_index"


def test_occurrence_budget(surrogate2):
    res = run(surrogate2, 2)
    with pytest.raises(sw.BudgetError):
        list(res.iter_occurrences(budget=10))
    _, _, complete = ss.build_T(res, surrogate2, budget=10)
    assert not complete


def test_J_family(surrogate1):
    res = run(surrogate1, 1, cap=8)
    for K in surrogate1.fam.all_F:
        fam = res.J_family(K)
        assert sum(m.length for m in fam) == pytest.approx(res.J_mass[K], abs=1e-15)


@pytest.mark.parametrize("d,expected", [(1, 1.0), (2, 0.5)])
def test_damage_ratio(surrogate1, d, expected):
    dmg = ss.damage_ratio(surrogate1, run(surrogate1, d))
    assert dmg.expected == expected
    assert dmg.deviation <= 1e-8 + dmg.tail_band
    assert dmg.universality_spread <= 1e-10
    assert dmg.A1_block == 0


def test_damage_is_universal(surrogate2):
    other = ls.assemble_F(ls.SurrogateRuleset(9.0, 2, kappa_blue=0.4, kappa_red=0.6), 2)
    a = ss.damage_ratio(surrogate2, run(surrogate2, 2))
    b = ss.damage_ratio(other, run(other, 2))
    assert a.ratio == pytest.approx(b.ratio, abs=1e-8 + a.tail_band + b.tail_band)


def test_frame_model_matches_dag(surrogate2):
    dag = ss.damage_ratio(surrogate2, run(surrogate2, 2))
    model = ss.damage_ratio(surrogate2, run(surrogate2, 2, materialize=False))
    assert dag.source == "dag" and model.source == "frame_model"
    assert dag.ratio == pytest.approx(model.ratio, abs=1e-12)


def test_pullback_norms(surrogate2):
    pb = ss.verify_pullback(surrogate2, run(surrogate2, 2))
    assert pb.max_deviation <= 1e-12
    assert pb.norms_ok


def test_choose_d():
    F = ls.assemble_F(ls.ConstantRuleset(), 1)
    assert ss.comparability_ratio(F) == pytest.approx(4)
    assert ss.choose_d(0.5, F) == 8
    assert ss.choose_d(0.25, F) == 2 * ss.choose_d(0.5, F)
    with pytest.raises(ValueError):
        ss.choose_d(0, F)


def test_audit_and_negative_control():
    F = ls.assemble_F(ls.SurrogateRuleset(1.2, 1), 1)
    d = ss.choose_d(1.0, F)
    res = run(F, d, materialize=False)
    ok = ss.smoothness_and_a2_audit(F, d, 1.0, result=res)
    assert ok.ok and ok.s_dyadic_W < 2 and ok.s_dyadic_V < 2
    assert ok.a2_tilde <= 16 * ok.a2_F
    bad = ss.smoothness_and_a2_audit(F, 1, 1.0)
    assert not bad.ok and bad.violations


def test_budgets(surrogate1):
    with pytest.raises(sw.BudgetError):
        run(surrogate1, 40, node_budget=1000)
    with pytest.raises(sw.BudgetError):
        ss.lattice_points(100, budget=1000)
    seg = ss.lattice_points(3, "segment")
    assert len(seg) == 11 and np.all(seg.sum(axis=1) == 12)
    tet = ss.lattice_points(2)
    assert len(tet) == math.comb(11, 3) - 4


def test_summary_is_serializable(surrogate1):
    import json
    doc = json.dumps(run(surrogate1, 1).summary())
    assert '"frozen_mass"' in doc
