import numpy as np
import pytest

from voidfem import calibration as C


K_PAPER, G_PAPER = C.moduli_from_young(0.547e6, 0.499)


class TestLateralStretch:
    def test_reference_state(self):
        assert C.lateral_stretch(1.0, K_PAPER, G_PAPER) == pytest.approx(1.0, abs=1e-10)

    def test_near_incompressible_limit(self):
        # nu -> 0.5 forces J -> 1, so lateral stretch approaches lam1^(-1/2)
        lam1 = 0.81
        lam_hat = C.lateral_stretch(lam1, K_PAPER, G_PAPER)
        assert abs(lam_hat - lam1**-0.5) / lam1**-0.5 < 0.005
        assert abs(lam_hat - 1.1111) < 0.006

    def test_residual_tolerance_randomized(self):
        rng = np.random.default_rng(0)
        for lam1 in rng.uniform(0.5, 1.0, size=50):
            lam_hat = C.lateral_stretch(lam1, K_PAPER, G_PAPER)
            assert abs(C._p_lateral(lam1, lam_hat, K_PAPER, G_PAPER)) < 1e-10 * G_PAPER

    def test_invalid_input(self):
        with pytest.raises(ValueError):
            C.lateral_stretch(-0.5, K_PAPER, G_PAPER)


class TestUniaxialStress:
    def test_zero_at_reference(self):
        assert C.uniaxial_p11(1.0, K_PAPER, G_PAPER) == pytest.approx(0.0, abs=1e-6)

    def test_compression_is_negative(self):
        assert C.uniaxial_p11(0.9, K_PAPER, G_PAPER) < 0.0

    def test_monotone_decreasing(self):
        lam = np.linspace(0.6, 1.0, 25)
        p = C.uniaxial_p11(lam, K_PAPER, G_PAPER)
        assert np.all(np.diff(p) > 0)  # increasing toward zero at lam=1

    def test_dual_path_consistency(self):
        # stretch-form expression vs tensor-form neo-Hookean law
        for lam1 in np.linspace(0.5, 1.0, 21):
            a = C.uniaxial_p11(lam1, K_PAPER, G_PAPER)
            b = C.uniaxial_p11_tensor(lam1, K_PAPER, G_PAPER)
            assert abs(a - b) <= 1e-10 * max(abs(a), abs(b), G_PAPER * 1e-6)


class TestFit:
    def test_moduli_from_young_paper_values(self):
        K, G = C.moduli_from_young(0.547e6, 0.499)
        assert abs(G - 0.182e6) < 0.5e3  # 0.182 MPa to three decimals
        assert abs(K - 91.17e6) < 0.05e6  # formula value, not the rounded 91.111

    def test_round_trip_recovers_young_modulus(self):
        e_true = 0.547e6
        K, G = C.moduli_from_young(e_true, 0.499)
        lam = np.linspace(0.7, 0.99, 30)
        data = C.UniaxialDataset(lam, C.uniaxial_p11(lam, K, G))
        fit = C.fit_young_modulus([data], nu=0.499)
        assert abs(fit.E - e_true) / e_true < 1e-6
        assert fit.rms < 1e-6 * abs(C.uniaxial_p11(0.7, K, G))

    def test_three_noisy_specimens_equal_weight(self):
        rng = np.random.default_rng(1)
        e_true = 0.547e6
        K, G = C.moduli_from_young(e_true, 0.499)
        sets = []
        for _ in range(3):
            lam = np.linspace(0.72, 0.98, 20)
            p = C.uniaxial_p11(lam, K, G) * (1 + 0.01 * rng.standard_normal(lam.size))
            sets.append(C.UniaxialDataset(lam, p))
        fit = C.fit_young_modulus(sets, nu=0.499)
        assert abs(fit.E - e_true) / e_true < 0.02
        assert fit.n_points == 60

    def test_degenerate_data_rejected(self):
        with pytest.raises(ValueError):
            C.fit_young_modulus([C.UniaxialDataset(np.ones(5), np.zeros(5))])

    def test_csv_roundtrip(self, tmp_path):
        lam = np.linspace(0.8, 0.99, 10)
        p = C.uniaxial_p11(lam, K_PAPER, G_PAPER)
        path = tmp_path / "spec.csv"
        with open(path, "w") as f:
            f.write("lambda1,p11_pa\n")
            for a, b in zip(lam, p):
                f.write(f"{a:.17g},{b:.17g}\n")
        ds = C.UniaxialDataset.from_csv(path)
        assert np.allclose(ds.lambda1, lam)
        assert np.allclose(ds.p11, p)
