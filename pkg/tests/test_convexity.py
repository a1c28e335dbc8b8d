import numpy as np
import pytest

from qnum import reformulation as rf
from qnum.convexity import (
    CURVE_COLUMNS,
    CertificateClass,
    certify,
    certify_scenario,
    check_cond1,
    check_cond2,
    cond2_margin,
    gershgorin_lower_bound,
    hessian_psd_probe,
    lemma_sup_bound,
    measure_curves,
    weakest,
)
from qnum.measures import DISTILLABLE, NEGATIVITY, SECRET_KEY, TELEPORTATION, MeasureModel
from qnum.network import DomainError

from conftest import sample_feasible, shared_network, single_network


def _square():
    # f = w^2: c = 0 fails Cond. 1, ln f = 2 ln w is concave everywhere
    return MeasureModel("square", lambda w: np.asarray(w, dtype=float) ** 2,
                        lambda w: 2 * np.asarray(w, dtype=float), lambda w: 2 + 0 * np.asarray(w, dtype=float))


def test_cond1():
    assert check_cond1(SECRET_KEY)
    assert check_cond1(DISTILLABLE)
    assert not check_cond1(NEGATIVITY)
    assert not check_cond1(TELEPORTATION)


@pytest.mark.parametrize("m", [SECRET_KEY, DISTILLABLE], ids=["sk", "de"])
def test_cond2_passes_near_one(m):
    rep = check_cond2(m)
    assert rep.passed and not rep.vacuous
    assert rep.min_g >= -1e-9
    assert rep.argmin_u > m.inflection
    # the binding region is u -> 1, where g tends to zero
    assert rep.argmin_u > 0.99


def test_cond2_margin_closed_form():
    u = 0.99
    F1 = SECRET_KEY.d1(u) / SECRET_KEY.value(u)
    F2 = (SECRET_KEY.d2(u) * SECRET_KEY.value(u) - SECRET_KEY.d1(u) ** 2) / SECRET_KEY.value(u) ** 2
    assert cond2_margin(SECRET_KEY, u) == pytest.approx(2 - u * F2 / (u * F2 + F1) - 1 / u, rel=1e-12)


def test_cond2_vacuous_for_log_concave():
    rep = check_cond2(NEGATIVITY)
    assert rep.vacuous and rep.passed and rep.grid_points == 0


def test_builtin_certificates():
    assert certify(SECRET_KEY).cls is CertificateClass.COND12
    assert certify(DISTILLABLE).cls is CertificateClass.COND12
    assert certify(NEGATIVITY).cls is CertificateClass.PRESERVED_CONVEX
    succ = certify(TELEPORTATION)
    assert succ.cls is CertificateClass.RESTRICTED_DOMAIN
    assert succ.threshold == 0.5
    assert certify(SECRET_KEY).threshold == pytest.approx(0.779944, abs=1e-6)
    assert certify(NEGATIVITY).threshold == pytest.approx(1 / 3)


def test_certificate_dict_keys():
    d = certify(SECRET_KEY).to_dict()
    assert {"c", "c1", "cond1", "cond2", "certificate"} <= set(d)
    assert d["certificate"] == "Cond12"


def test_custom_measure_falls_back_to_uncertified():
    cert = certify(_square())
    assert cert.cls is CertificateClass.UNCERTIFIED
    assert not cert.cls.certified
    assert any("1/2" in n for n in cert.notes)


def test_weakest_ordering():
    C = CertificateClass
    assert weakest([C.COND12, C.PRESERVED_CONVEX]) is C.PRESERVED_CONVEX
    assert weakest([C.COND12, C.RESTRICTED_DOMAIN, C.PRESERVED_CONVEX]) is C.RESTRICTED_DOMAIN
    assert weakest([C.COND12, C.UNCERTIFIED]) is C.UNCERTIFIED
    assert certify_scenario([SECRET_KEY, NEGATIVITY]) is C.PRESERVED_CONVEX


def test_lemma_bound_values_and_domain():
    assert lemma_sup_bound(2, 0.5) == pytest.approx(2.0)
    assert lemma_sup_bound(4, 0.5, beta=0.3) == pytest.approx(4.3)
    for bad in [(1, 0.5), (3, 0.0), (3, 1.0), (2.5, 0.5)]:
        with pytest.raises(DomainError):
            lemma_sup_bound(*bad)
    with pytest.raises(DomainError):
        lemma_sup_bound(3, 0.5, beta=1.0)


def test_lemma1_exactly_feasible_near_maximizer():
    # rescaling the first entry keeps prod b = t exactly
    delta = 1e-4
    for n in range(2, 7):
        for t in (0.5, 0.8, 0.95):
            b = np.full(n, 1 - delta)
            b[0] = t / (1 - delta) ** (n - 1)
            assert np.prod(b) == pytest.approx(t, rel=1e-12)
            total = np.sum(1 / b[: n - 1])
            assert total <= lemma_sup_bound(n, t) + 1e-12
            assert lemma_sup_bound(n, t) - total < 1e-3


def test_gershgorin_lower_bound():
    h = np.array([[4.0, 1.0, -1.0], [1.0, 3.0, 0.5], [-1.0, 0.5, 5.0]])
    assert gershgorin_lower_bound(h) == pytest.approx(1.5)
    assert gershgorin_lower_bound(h) <= np.linalg.eigvalsh(h)[0]


@pytest.mark.parametrize("pair", [("sk", "sk"), ("de", "sk"), ("sk", "neg")])
def test_psd_probe(pair, rng):
    net = shared_network(*pair)
    for y in sample_feasible(net, None, 20, rng):
        probe = hessian_psd_probe(net, None, y)
        assert probe.min_eigenvalue_estimate >= -1e-8
        assert probe.gershgorin_bound <= probe.min_eigenvalue_estimate + 1e-9
        exact = np.linalg.eigvalsh(rf.objective_hessian(net, None, y))[0]
        assert probe.min_eigenvalue_estimate == pytest.approx(exact)


def test_psd_probe_rejects_infeasible():
    net = single_network(150.0)
    with pytest.raises(DomainError):
        hessian_psd_probe(net, None, [np.log(200.0)])


def test_neg_objective_midpoint_convex(rng):
    # the neg route alone fails Cond. 1 but its objective stays convex
    net = shared_network("neg", "neg")
    pts = sample_feasible(net, None, 400, rng, margin=1e-6)
    a, b = pts[:200], pts[200:]
    for ya, yb in zip(a, b):
        mid = 0.5 * (ya + yb)
        lhs = rf.objective(net, None, mid)
        rhs = 0.5 * (rf.objective(net, None, ya) + rf.objective(net, None, yb))
        assert lhs <= rhs + 1e-10


def test_measure_curves():
    cur = measure_curves(SECRET_KEY, 501)
    assert list(cur) == list(CURVE_COLUMNS)
    assert all(len(v) == 501 for v in cur.values())
    c1 = SECRET_KEY.inflection
    u = cur["u"]
    assert np.all(np.isnan(cur["g"][u <= c1]))
    assert np.all(np.isfinite(cur["g"][u > c1]))
    np.testing.assert_allclose(cur["F"], np.log(cur["f"]))
    neg = measure_curves(NEGATIVITY, 101)
    assert np.all(np.isnan(neg["g"]))
    with pytest.raises(ValueError):
        measure_curves(SECRET_KEY, 1)
