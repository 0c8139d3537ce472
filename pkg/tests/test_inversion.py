import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shtomo.forward_model import DtNMatrix, KernelSpectrum, MaterialParams, assemble_dtn_matrix, build_kernel_spectrum
from shtomo.inversion import (
    ImagingError,
    NoiseSpec,
    RegularizationSpec,
    SamplingGrid,
    build_imaging_map,
    decompose,
    filter_factor,
    indicator,
    inject_noise,
    is_degenerate,
    noise_matrix,
    relative_noise_level,
)
from shtomo.probe import SamplePoint, assemble_probe


def uniform_disk(rng, count, radius):
    r = radius * np.sqrt(rng.uniform(size=count))
    return [SamplePoint(float(a), float(b)) for a, b in zip(r, rng.uniform(0, 2 * np.pi, count))]


def eigh_quadratic_form(A, b):
    """<b, A^+ b> through the symmetric eigendecomposition."""
    ev, V = np.linalg.eigh(A)
    c = V.T @ b
    nz = ev != 0
    return float(np.sum(c[nz] ** 2 / ev[nz]))


@pytest.fixture(scope="module")
def svd1(baseline_matrix):
    return decompose(baseline_matrix)


class TestNoise:
    def test_zero_delta_is_identity(self, baseline_matrix):
        assert np.array_equal(inject_noise(baseline_matrix, NoiseSpec(0.0, 9)).values, baseline_matrix.values)

    @pytest.mark.parametrize("seed", [0, 1, 2**63 + 5])
    def test_unit_spectral_norm(self, seed):
        E = noise_matrix(128, seed)
        assert np.linalg.svd(E, compute_uv=False)[0] == pytest.approx(1.0, abs=1e-8)
        assert np.max(np.abs(E)) <= 1.0

    def test_deterministic(self, baseline_matrix):
        a = inject_noise(baseline_matrix, NoiseSpec(0.05, 42)).values
        b = inject_noise(baseline_matrix, NoiseSpec(0.05, 42)).values
        c = inject_noise(baseline_matrix, NoiseSpec(0.05, 43)).values
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, c)

    def test_multiplicative_form(self, baseline_matrix):
        A = baseline_matrix.values
        E = noise_matrix(128, 7)
        noisy = inject_noise(baseline_matrix, NoiseSpec(0.02, 7)).values
        assert np.array_equal(noisy, A * (1 + 0.02 * E))

    @pytest.mark.parametrize("delta", [1e-3, 1e-2, 0.1])
    def test_noise_magnitude(self, baseline_matrix, delta):
        noisy = inject_noise(baseline_matrix, NoiseSpec(delta, 3))
        ratio = relative_noise_level(baseline_matrix, noisy)
        print(f"delta={delta}: ||A_delta - A||_2 / ||A||_2 = {ratio:.3e} ({ratio / delta:.3f} delta)")
        assert 0 < ratio <= delta * 128

    def test_rejects_negative_delta(self):
        with pytest.raises(ValueError):
            NoiseSpec(-0.1, 0)


class TestDecompose:
    def test_zero_matrix(self):
        assert not np.any(decompose(DtNMatrix(np.zeros((8, 8)))).sigma)

    def test_reconstruction_and_orthonormality(self, baseline_matrix):
        noisy = inject_noise(baseline_matrix, NoiseSpec(0.01, 1))
        svd = decompose(noisy)
        rebuilt = (svd.U * svd.sigma) @ svd.Vt
        assert np.max(np.abs(rebuilt - noisy.values)) <= 1e-10 * svd.sigma[0]
        assert np.max(np.abs(svd.U.T @ svd.U - np.eye(128))) <= 1e-12
        assert np.all(np.diff(svd.sigma) <= 0)

    def test_singular_values_are_abs_eigenvalues(self, baseline_matrix, svd1):
        eig = np.sort(np.abs(np.linalg.eigvalsh(baseline_matrix.values)))[::-1]
        assert np.max(np.abs(svd1.sigma - eig)) <= 1e-10

    def test_sign_flip(self, baseline_matrix, svd1):
        neg = decompose(DtNMatrix(-baseline_matrix.values))
        assert np.allclose(neg.sigma, svd1.sigma, rtol=0, atol=1e-15)

    def test_non_finite(self):
        bad = np.eye(4)
        bad[1, 2] = np.nan
        with pytest.raises(ValueError):
            decompose(DtNMatrix(bad))


class TestFilter:
    def test_reference_values(self):
        assert filter_factor(1e-3, 1e-6) == 1
        assert filter_factor(1e-4, 1e-6) == 0

    def test_inclusive_boundary(self):
        t = 1e-3
        assert filter_factor(t, t * t) == 1
        assert filter_factor(t, np.nextafter(t * t, 1)) == 0

    def test_validation(self):
        with pytest.raises(ValueError):
            filter_factor(-1.0, 1e-6)
        with pytest.raises(ValueError):
            RegularizationSpec(0.0)
        with pytest.raises(ValueError):
            RegularizationSpec(1e-6, filter="tikhonov")


class TestIndicator:
    def test_origin_is_degenerate(self, svd1):
        for norm in ("unit", "raw"):
            ind = indicator(SamplePoint(0.0, 0.0), svd1, RegularizationSpec(1e-16), probe_norm=norm)
            assert ind == 0 and is_degenerate(ind)

    def test_cutoff_above_largest_singular_value(self, baseline_matrix, svd1):
        reg = RegularizationSpec(svd1.sigma[0] ** 2 * 1.01)
        assert indicator(SamplePoint(0.3, 1.0), svd1, reg) == 0
        with pytest.raises(ImagingError, match="imaging map empty"):
            build_imaging_map(baseline_matrix, NoiseSpec(), reg, SamplingGrid(21))

    def test_pseudo_inverse_oracle(self, baseline_matrix, svd1, rng):
        reg = RegularizationSpec(svd1.sigma[-1] ** 2)
        for z in uniform_disk(rng, 50, 0.6):
            b = assemble_probe(z, 128).unit
            expected = eigh_quadratic_form(baseline_matrix.values, b)
            assert indicator(z, svd1, reg, 128) == pytest.approx(expected, rel=1e-8)

    def test_probe_scaling(self, svd1):
        # the two probe normalizations differ by the squared norm ratio
        z = SamplePoint(0.42, 2.0)
        p = assemble_probe(z, 128)
        reg = RegularizationSpec(1e-16)
        ratio = indicator(z, svd1, reg, probe_norm="raw") / indicator(z, svd1, reg)
        assert ratio == pytest.approx((np.linalg.norm(p.centered) / p.norm_raw) ** 2, rel=1e-12)

    def test_size_mismatch(self, svd1):
        with pytest.raises(ValueError):
            indicator(SamplePoint(0.1, 0.0), svd1, RegularizationSpec(1e-6), N=64)

    @settings(max_examples=40, deadline=None)
    @given(
        st.floats(0.01, 0.94),
        st.floats(0, 2 * np.pi),
        st.floats(-16, -1),
        st.floats(0.1, 6),
    )
    def test_monotone_in_alpha(self, svd1, r, theta, log_alpha, drop):
        z = SamplePoint(r, theta)
        big = indicator(z, svd1, RegularizationSpec(10**log_alpha))
        small = indicator(z, svd1, RegularizationSpec(10 ** (log_alpha - drop)))
        assert small >= big

    @pytest.mark.parametrize("m", [1, 16, 50])
    def test_rotation_invariance(self, svd1, m):
        reg = RegularizationSpec(1e-11)
        for r in (0.2, 0.5, 0.8):
            base = indicator(SamplePoint(r, 0.1), svd1, reg)
            turned = indicator(SamplePoint(r, 0.1 + 2 * np.pi * m / 128), svd1, reg)
            assert turned == pytest.approx(base, rel=1e-8)


class TestImagingMap:
    def test_grid_avoids_origin(self):
        for res in (1, 3, 4, 11, 100, 101):
            x, y, *_ = SamplingGrid(res).points()
            assert x.size and np.min(np.hypot(x, y)) > 0
            assert np.all(np.hypot(x, y) <= 0.95)

    def test_default_grid(self):
        grid = SamplingGrid()
        assert (grid.resolution, grid.r_max) == (101, 0.95)
        ax = grid.axis()
        assert ax[1] - ax[0] == pytest.approx(0.019)

    def test_baseline_contrast(self, baseline_matrix):
        m = build_imaging_map(baseline_matrix, NoiseSpec(), RegularizationSpec(1e-16))
        r = m.r
        inner = np.mean(m.w[r <= 0.63] >= 0.5)
        outer = np.mean(m.w[(r >= 0.77) & (r <= 0.95)] >= 0.5)
        assert inner > outer

    def test_normalization(self, baseline_matrix):
        m = build_imaging_map(baseline_matrix, NoiseSpec(0.01, 5), RegularizationSpec(1e-8), SamplingGrid(41))
        finite = m.w[np.isfinite(m.w)]
        assert finite.max() == 1.0
        assert finite.min() >= 0.0

    def test_zero_contrast_is_empty(self):
        A = assemble_dtn_matrix(KernelSpectrum(np.zeros(101)), 128)
        with pytest.raises(ImagingError, match="imaging map empty"):
            build_imaging_map(A, NoiseSpec(), RegularizationSpec(1e-16))

    def test_deterministic(self, baseline_matrix):
        args = (baseline_matrix, NoiseSpec(0.01, 11), RegularizationSpec(1e-8), SamplingGrid(31))
        a, b = build_imaging_map(*args), build_imaging_map(*args)
        assert a.to_csv() == b.to_csv()
        assert a.to_pgm() == b.to_pgm()

    def test_raw_probe_scaling_spikes_at_center(self, baseline_matrix):
        # with the raw-norm probe, W falls off like |z|^-2 away from the center
        m = build_imaging_map(baseline_matrix, NoiseSpec(), RegularizationSpec(1e-16), probe_norm="raw")
        assert np.mean(m.w[m.r <= 0.63] >= 0.5) < 0.01
        assert m.r[np.nanargmax(m.w)] < 0.02

    def test_degenerate_points_exported_as_missing(self, baseline_matrix):
        # an odd grid with extent chosen so one node sits exactly on the origin
        m = build_imaging_map(baseline_matrix, NoiseSpec(), RegularizationSpec(1e-16), SamplingGrid(5))
        x = np.append(m.x, 0.0)
        y = np.append(m.y, 0.0)
        from shtomo.inversion import ImagingMap

        w = np.append(m.w, np.nan)
        forced = ImagingMap(
            x=x, y=y, row=np.append(m.row, 0), col=np.append(m.col, 0), shape=m.shape,
            w_reg=np.append(m.w_reg, np.nan), w=w,
        )
        last = forced.to_csv().splitlines()[-1]
        assert last == "0.0,0.0,,"

    def test_csv_and_pgm_format(self, baseline_matrix):
        m = build_imaging_map(baseline_matrix, NoiseSpec(), RegularizationSpec(1e-11), SamplingGrid(9))
        lines = m.to_csv().splitlines()
        assert lines[0] == "x,y,w_reg,w"
        assert len(lines) == 1 + m.x.size
        pgm = m.to_pgm().split()
        assert pgm[:4] == ["P2", "9", "9", "255"]
        pixels = np.array(pgm[4:], dtype=int)
        assert pixels.size == 81 and pixels.max() == 255 and pixels.min() >= 0
        img = m.image()
        # the brightest pixel is the sampled point with W = 1
        k = np.nanargmax(m.w)
        assert img[m.row[k], m.col[k]] == 255

    @pytest.mark.parametrize("m", [1, 32])
    def test_map_rotation_symmetry(self, baseline_matrix, m):
        svd = decompose(baseline_matrix)
        reg = RegularizationSpec(1e-16)
        rings = [0.25, 0.5, 0.85]
        for r in rings:
            vals = [indicator(SamplePoint(r, 2 * np.pi * k * m / 128), svd, reg) for k in range(4)]
            assert np.allclose(vals, vals[0], rtol=1e-8, atol=0)


def test_stiff_and_soft_inclusions_image(baseline_matrix):
    # mu < 1 (soft inclusion above the coercivity threshold) still separates inside from outside
    params = MaterialParams(mu=0.95, mu_s=0.1, ell2=1e-3, rho=0.7)
    A = assemble_dtn_matrix(build_kernel_spectrum(params, 100), 128)
    m = build_imaging_map(A, NoiseSpec(), RegularizationSpec(1e-16), SamplingGrid(51))
    assert m.contrast(0.7) > 3
