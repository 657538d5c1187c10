import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from caplab.errors import GeometryError, ParameterError
from caplab.geometry import (
    Branch,
    Sphere,
    SphericalCone,
    cone_alpha0,
    cone_contains,
    cone_probe_points,
    cone_radii,
    invert_point,
    polarize_points,
    three_spheres,
    three_spheres_points,
    three_spheres_radius,
    three_spheres_radius_slope,
)

coord = st.floats(min_value=-10, max_value=10, allow_nan=False)


def seam(k):
    return math.pi - math.atan(1 / k)


# Both branch radii written out independently of the library code.
def r3_interior(k, t):
    return math.sqrt(-k * math.cos(t) * math.sqrt(1 - k**2 * math.sin(t) ** 2))


def r3_origin(k, t):
    a = math.sqrt(1 - k**2 * math.sin(t) ** 2)
    return math.sqrt((k**2 / (a - k * math.cos(t)) + k * math.cos(t)) ** 2 + k**2 * math.sin(t) ** 2)


def r3_fixed_point(k, t):
    """Root of tau(rho) = rho by bracketing; independent of the closed form."""
    s2 = (k * math.sin(t)) ** 2
    a = math.sqrt(1 - s2)

    def g(rho):
        q = math.sqrt(rho * rho - s2)
        return (q - k * math.cos(t)) * (q + a) - rho * rho

    lo = k if t <= math.pi / 2 else k * math.sin(t)
    return brentq(g, lo, 1e6, xtol=1e-15, rtol=1e-15)


class TestInversion:
    def test_sphere_points_fixed(self):
        s = Sphere((1.0, -2.0), 3.0)
        x = np.array([4.0, -2.0])
        np.testing.assert_allclose(invert_point(x, s), x)

    def test_outer_point_maps_inside(self):
        s = Sphere((1.0, -2.0), 3.0)
        np.testing.assert_allclose(invert_point((7.0, -2.0), s), (2.5, -2.0))

    def test_center_has_no_image(self):
        with pytest.raises(GeometryError, match="center has no finite image"):
            invert_point((0.0, 0.0, 0.0), Sphere((0.0, 0.0, 0.0), 1.0))

    def test_round_trip_100_random(self):
        rng = np.random.default_rng(7)
        s = Sphere((0.3, -0.1, 0.2), 0.7)
        for x in rng.normal(size=(100, 3)):
            back = invert_point(invert_point(x, s), s)
            np.testing.assert_allclose(back, x, rtol=1e-10, atol=1e-12)

    @given(st.lists(coord, min_size=3, max_size=3), st.floats(0.1, 5))
    def test_involution_property(self, x, r):
        s = Sphere((0.5, 0.25, -1.0), r)
        x = np.array(x)
        if np.linalg.norm(x - s.center) < 1e-3:
            return
        y = invert_point(x, s)
        assert np.linalg.norm(y - s.center) * np.linalg.norm(x - s.center) == pytest.approx(r * r, rel=1e-10)
        np.testing.assert_allclose(invert_point(y, s), x, rtol=1e-10, atol=1e-9)


class TestPolarizePoints:
    s = Sphere((0.0, 0.0), 1.0)

    def test_inside_point_kept(self):
        (p,) = polarize_points([(0.2, 0.3)], self.s)
        np.testing.assert_allclose(p, (0.2, 0.3))

    def test_outside_point_reflected(self):
        (p,) = polarize_points([(2.0, 0.0)], self.s)
        np.testing.assert_allclose(p, (0.5, 0.0))

    def test_symmetric_set_unchanged(self):
        E = [(0.5, 0.0), (2.0, 0.0), (0.0, 0.25), (0.0, 4.0)]
        out = polarize_points(E, self.s)
        assert sorted(map(tuple, np.round(out, 12))) == sorted(map(tuple, np.round(E, 12)))

    def test_center_in_set_rejected(self):
        with pytest.raises(GeometryError):
            polarize_points([(0.0, 0.0)], self.s)

    @settings(max_examples=50)
    @given(st.lists(st.tuples(coord, coord), min_size=1, max_size=12))
    def test_idempotent(self, pts):
        pts = [p for p in pts if math.hypot(*p) > 1e-3]
        once = polarize_points(pts, self.s)
        twice = polarize_points(once, self.s)
        key = lambda P: sorted(tuple(np.round(p, 9)) for p in P)  # noqa: E731
        assert key(once) == key(twice)


class TestThreeSpheresRadius:
    @pytest.mark.parametrize("k", [0.1, 0.3, 0.5, 0.7, 0.9])
    def test_endpoints(self, k):
        assert three_spheres_radius(k, 0.0) == pytest.approx(k / (1 - k), abs=1e-12)
        assert three_spheres_radius(k, math.pi) == pytest.approx(min(math.sqrt(k), k / (1 - k)), abs=1e-12)
        assert three_spheres_radius(k, seam(k)) == pytest.approx(k / math.sqrt(1 + k * k), abs=1e-12)

    def test_half_case_values(self):
        assert three_spheres_radius(0.5, 0.0) == pytest.approx(1.0, abs=1e-14)
        assert three_spheres_radius(0.5, seam(0.5)) == pytest.approx(1 / math.sqrt(5), abs=1e-14)

    @pytest.mark.parametrize("k", [0.1, 0.25, 0.5, 0.75, 0.9])
    def test_both_branch_formulas_meet_at_seam(self, k):
        t = seam(k)
        assert r3_interior(k, t) == pytest.approx(k / math.sqrt(1 + k * k), abs=1e-12)
        assert r3_origin(k, t) == pytest.approx(k / math.sqrt(1 + k * k), abs=1e-12)
        left = three_spheres_radius(k, t - 1e-12)
        right = three_spheres_radius(k, t + 1e-12)
        assert abs(left - right) < 1e-10

    @pytest.mark.parametrize("k", [0.1, 0.2, 0.5, 0.8, 0.9])
    def test_closed_form_matches_fixed_point_root(self, k):
        for t in np.linspace(0.0, seam(k) - 1e-3, 25):
            assert three_spheres_radius(k, t) == pytest.approx(r3_fixed_point(k, t), rel=1e-10)

    @pytest.mark.parametrize("k", [0.1 * i for i in range(1, 10)])
    def test_slope_negative_by_finite_differences(self, k):
        ts = np.linspace(0.0, seam(k), 52)[1:-1]
        hstep = 1e-6
        for t in ts:
            fd = (three_spheres_radius(k, t + hstep) - three_spheres_radius(k, t - hstep)) / (2 * hstep)
            assert fd < 0
            assert fd == pytest.approx(three_spheres_radius_slope(k, t), rel=1e-5, abs=1e-9)

    @pytest.mark.parametrize("k", [0.1 * i for i in range(1, 10)])
    def test_interior_branch_increases(self, k):
        ts = np.linspace(seam(k), math.pi, 20)
        r = np.array([three_spheres_radius(k, t) for t in ts])
        assert np.all(np.diff(r) >= 0)
        uncapped = r[1:] < k / (1 - k)
        assert np.all(np.diff(r)[uncapped] > 0)

    @pytest.mark.parametrize("k", [0.1, 0.2, 0.3])
    def test_small_k_near_pi_uses_capped_sphere(self, k):
        x1, x2 = three_spheres_points(k, math.pi)
        res = three_spheres(x1, x2, (0.0, 0.0), 1.0, k)
        assert res.branch is Branch.CAPPED
        assert res.sphere.radius == pytest.approx(k / (1 - k))
        np.testing.assert_allclose(invert_point(x1, res.sphere), x2, atol=1e-12)
        assert res.sphere.contains((0.0, 0.0))
        assert res.sphere.contains(x2)

    def test_large_k_at_pi_keeps_perpendicular_centre(self):
        k = 0.5
        x1, x2 = three_spheres_points(k, math.pi)
        res = three_spheres(x1, x2, (0.0, 0.0), 1.0, k)
        assert res.branch is Branch.INTERIOR
        assert res.sphere.radius == pytest.approx(math.sqrt(k))

    @pytest.mark.parametrize("k", [0.1 * i for i in range(1, 10)])
    def test_bounds(self, k):
        for t in np.linspace(0, math.pi, 50):
            r = three_spheres_radius(k, t)
            assert k / math.sqrt(1 + k * k) - 1e-12 <= r <= k / (1 - k) + 1e-12
            if t <= math.pi / 2:
                assert r >= k / math.sqrt(1 - k * k) - 1e-12

    @pytest.mark.parametrize("k,t", [(0.0, 1.0), (1.0, 1.0), (1.5, 0.0), (0.5, -0.1), (0.5, 4.0)])
    def test_parameter_errors(self, k, t):
        with pytest.raises(ParameterError):
            three_spheres_radius(k, t)


def _random_config(rng, dim, k, R):
    x0 = rng.uniform(-2, 2, size=dim)
    u = rng.normal(size=dim)
    w = rng.normal(size=dim)
    return x0, x0 + R * u / np.linalg.norm(u), x0 + k * R * w / np.linalg.norm(w)


class TestThreeSpheres:
    @pytest.mark.parametrize("dim", [2, 3])
    def test_random_configurations(self, dim):
        rng = np.random.default_rng(dim)
        for _ in range(200):
            k = rng.uniform(0.05, 0.95)
            R = rng.uniform(0.1, 5.0)
            x0, x1, x2 = _random_config(rng, dim, k, R)
            res = three_spheres(x1, x2, x0, R, k)
            S = res.sphere
            np.testing.assert_allclose(invert_point(x1, S), x2, atol=1e-9 * R)
            assert np.linalg.norm(x0 - S.center) <= S.radius * (1 + 1e-12)
            assert np.linalg.norm(x2 - S.center) <= S.radius * (1 + 1e-12)
            assert k / math.sqrt(1 + k * k) * R * (1 - 1e-12) <= S.radius <= k / (1 - k) * R * (1 + 1e-12)
            if res.branch is Branch.ORIGIN:
                assert np.linalg.norm(x0 - S.center) == pytest.approx(S.radius, rel=1e-10)

    def test_theta_recovered_from_canonical_points(self):
        for k in (0.2, 0.6):
            for t in np.linspace(0, math.pi, 13):
                x1, x2 = three_spheres_points(k, t, R=2.0, x0=(1.0, -1.0))
                res = three_spheres(x1, x2, (1.0, -1.0), 2.0, k)
                assert res.theta == pytest.approx(t, abs=1e-9)
                assert res.sphere.radius == pytest.approx(2.0 * three_spheres_radius(k, t), rel=1e-12)

    def test_collinear_cases(self):
        res = three_spheres((-1.0, 0.0), (0.5, 0.0), (0.0, 0.0), 1.0, 0.5)
        assert res.theta == pytest.approx(0.0)
        assert res.sphere.radius == pytest.approx(1.0)
        res = three_spheres((-1.0, 0.0, 0.0), (-0.5, 0.0, 0.0), (0.0, 0.0, 0.0), 1.0, 0.5)
        assert res.theta == pytest.approx(math.pi)
        assert res.sphere.radius == pytest.approx(math.sqrt(0.5))

    def test_preconditions(self):
        with pytest.raises(ParameterError):
            three_spheres((1, 0), (0.5, 0), (0, 0), 1.0, 1.2)
        with pytest.raises(GeometryError):
            three_spheres((1.1, 0), (0.5, 0), (0, 0), 1.0, 0.5)
        with pytest.raises(GeometryError):
            three_spheres((1, 0), (0.4, 0), (0, 0), 1.0, 0.5)


class TestCones:
    def test_alpha0_values(self):
        assert cone_alpha0(1 / math.sqrt(2), 1.0) == pytest.approx(math.pi / 4)
        assert cone_alpha0(0.5, 1.0) == pytest.approx(math.pi / 3)
        assert cone_alpha0(1 - 1e-12, 1.0) == pytest.approx(0.0, abs=2e-6)
        with pytest.raises(ParameterError):
            cone_alpha0(1.0, 1.0)

    def test_radii(self):
        assert cone_radii(0.0, 1.0, 2.0) == pytest.approx((1.0, 1.0))
        ext, _ = cone_radii(math.pi / 6, 1.0, 2.0)
        assert ext == pytest.approx(2 - 2 / math.sqrt(3))
        r, R = 0.4, 1.0
        assert cone_alpha0(r, R) == pytest.approx(math.acos(r / R))
        a = 0.999999 * cone_alpha0(r, R)
        ext, inn = cone_radii(a, r, R)
        assert ext > 0 and 0 < inn < 1e-5
        with pytest.raises(ParameterError):
            cone_radii(cone_alpha0(r, R), r, R)

    @given(st.floats(0.05, 0.95), st.floats(0.0, 0.999))
    def test_radii_positive_below_alpha0(self, frac, afrac):
        R = 1.0
        r = frac * R
        a = afrac * cone_alpha0(r, R)
        ext, inn = cone_radii(a, r, R)
        assert 0 < ext < R
        if math.cos(a) > r / R:
            assert inn > 0

    def test_contains(self):
        c = SphericalCone((0.0, 0.0), (1.0, 0.0), 0.3, 2.0)
        assert cone_contains(c, (2.0, 0.0))
        assert not cone_contains(c, (0.0, 0.0))
        w = (math.cos(0.31), math.sin(0.31))
        assert not cone_contains(c, (2.0 * w[0], 2.0 * w[1]))
        assert not cone_contains(c, (2.1, 0.0))

    @pytest.mark.parametrize("dim", [2, 3])
    def test_probe_points_lie_in_cone(self, dim):
        axis = np.zeros(dim)
        axis[-1] = 1.0
        c = SphericalCone(np.full(dim, 0.2), axis, 0.4, 0.5)
        pts = cone_probe_points(c, 5)
        assert len(pts) == 5
        assert all(cone_contains(c, p) for p in pts)
