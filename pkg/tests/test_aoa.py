import numpy as np
import pytest

from csisense import (
    ArrayGeometry,
    ConfigurationError,
    DegenerateGeometryError,
    DimensionMismatchError,
    PathComponent,
    Pose2D,
    Profile2D,
    BearingEstimate,
    ground_truth_bearing,
    synth_frame,
    wavelength,
    wrap_angle,
)
from csisense.aoa import (
    AoaConfig,
    ProfileAverager,
    RejectedBearing,
    UnsupportedGeometryError,
    average_profiles,
    bartlett_profile,
    estimate_bearing,
    music_spectrum,
    read_profile_pgm,
    spotfi_estimate,
    transpose_for_aod,
    triangulate,
    write_profile_pgm,
)
from csisense.core import SPEED_OF_LIGHT


@pytest.fixture()
def cfg():
    return AoaConfig()


def single_path_frame(geom, chan, theta, tau=10e-9, snr_db=None, seed=None):
    return synth_frame([PathComponent(aoa=theta, delay_s=tau)], geom, chan,
                       snr_db=snr_db, rng_seed=seed)


class TestBartlett:
    def test_noiseless_peak_at_truth(self, square_geom, chan80, cfg):
        theta, tau = np.radians(37.0), 18e-9
        frame = single_path_frame(square_geom, chan80, theta, tau)
        profile = bartlett_profile(frame, square_geom, cfg)
        ti, di = profile.argmax_cell()
        assert abs(wrap_angle(profile.theta_grid[ti] - theta)) <= np.radians(1.0)
        assert abs(profile.dist_grid[di] - SPEED_OF_LIGHT * tau) <= 0.25

    def test_two_paths_direct_strongest_reflection_visible(self, square_geom, chan80, cfg):
        th_d, th_r = np.radians(10.0), np.radians(-75.0)
        tau_d, tau_r = 12e-9, 40e-9
        frame = synth_frame(
            [PathComponent(aoa=th_d, delay_s=tau_d, amplitude=1.0),
             PathComponent(aoa=th_r, delay_s=tau_r, amplitude=0.5)],
            square_geom, chan80,
        )
        profile = bartlett_profile(frame, square_geom, cfg)
        ti, di = profile.argmax_cell()
        assert abs(wrap_angle(profile.theta_grid[ti] - th_d)) <= np.radians(1.0)
        # reflection shows as a local maximum near its own cell
        ri = np.argmin(np.abs(profile.theta_grid - th_r))
        rj = np.argmin(np.abs(profile.dist_grid - SPEED_OF_LIGHT * tau_r))
        region = profile.values[ri - 2:ri + 3, rj - 2:rj + 3]
        assert region.max() > 0.15

    def test_global_phase_invariance(self, square_geom, chan80, cfg):
        frame = single_path_frame(square_geom, chan80, 0.5, 20e-9, snr_db=20.0, seed=5)
        rotated = frame
        rotated.csi = (frame.csi * np.exp(1j * 1.234)).astype(np.complex64)
        a = bartlett_profile(frame, square_geom, cfg)
        b = bartlett_profile(rotated, square_geom, cfg)
        assert np.allclose(a.values, b.values, atol=1e-5)

    def test_normalized_to_one(self, square_geom, chan80, cfg):
        frame = single_path_frame(square_geom, chan80, -1.2)
        assert bartlett_profile(frame, square_geom, cfg).values.max() == pytest.approx(1.0)

    def test_dimension_mismatch(self, chan80, cfg):
        geom3 = ArrayGeometry.uniform_linear(3, 0.02)
        frame = single_path_frame(ArrayGeometry.square(0.02), chan80, 0.0)
        with pytest.raises(DimensionMismatchError):
            bartlett_profile(frame, geom3, cfg)


class TestMusic:
    def test_single_source_peak_and_ratio(self, square_geom, chan80, cfg):
        theta = np.radians(-58.0)
        frame = single_path_frame(square_geom, chan80, theta)
        spectrum = music_spectrum([frame], square_geom, cfg)
        k = int(np.argmax(spectrum))
        assert abs(wrap_angle(cfg.theta_grid[k] - theta)) <= np.radians(1.0)
        assert spectrum[k] >= 1e3 * np.median(spectrum)

    def test_global_phase_invariance(self, square_geom, chan80, cfg):
        frame = single_path_frame(square_geom, chan80, 0.9, snr_db=15.0, seed=2)
        a = music_spectrum([frame], square_geom, cfg)
        frame.csi = (frame.csi * np.exp(1j * 0.77)).astype(np.complex64)
        b = music_spectrum([frame], square_geom, cfg)
        # identical up to the float32 rounding of the rotated frame;
        # compare the well-conditioned denominators and the argmax
        assert np.allclose(1.0 / a, 1.0 / b, atol=1e-5)
        assert np.argmax(a) == np.argmax(b)

    def test_full_source_count_rejected(self, square_geom, chan80):
        frame = single_path_frame(square_geom, chan80, 0.1)
        with pytest.raises(ConfigurationError):
            music_spectrum([frame], square_geom, AoaConfig(n_sources=4))

    def test_no_frames_rejected(self, square_geom, cfg):
        with pytest.raises(ConfigurationError):
            music_spectrum([], square_geom, cfg)


class TestSpotfi:
    def test_single_path_within_one_cell(self, ula_geom, chan80):
        cfg = AoaConfig(theta_grid=np.radians(np.arange(-89.0, 90.0)))
        theta, tau = np.radians(23.0), 16e-9
        frame = single_path_frame(ula_geom, chan80, theta, tau)
        top = spotfi_estimate(frame, ula_geom, cfg)[0]
        assert abs(wrap_angle(top.theta - theta)) <= np.radians(1.0)
        assert abs(top.tau - tau) <= 0.25 / SPEED_OF_LIGHT

    def test_two_paths_both_recovered(self, ula_geom, chan80):
        cfg = AoaConfig(theta_grid=np.radians(np.arange(-89.0, 90.0)), n_sources=2)
        th1, tau1 = np.radians(5.0), 10e-9
        th2, tau2 = np.radians(42.0), 10e-9 + 9e-9  # 37 deg, 2.7 m apart
        frame = synth_frame(
            [PathComponent(aoa=th1, delay_s=tau1, amplitude=1.0),
             PathComponent(aoa=th2, delay_s=tau2, amplitude=0.55)],
            ula_geom, chan80,
        )
        paths = spotfi_estimate(frame, ula_geom, cfg)
        assert len(paths) == 2
        cell_t, cell_d = np.radians(1.0), 0.25 / SPEED_OF_LIGHT
        # match by nearest bearing: both truths recovered within one cell
        for th, tau in ((th1, tau1), (th2, tau2)):
            best = min(paths, key=lambda p: abs(wrap_angle(p.theta - th)))
            assert abs(wrap_angle(best.theta - th)) <= cell_t
            assert abs(best.tau - tau) <= cell_d

    def test_delay_shift_moves_tau_estimates(self, ula_geom, chan80):
        cfg = AoaConfig(theta_grid=np.radians(np.arange(-89.0, 90.0)))
        theta = np.radians(-15.0)
        shift = 20e-9
        a = spotfi_estimate(single_path_frame(ula_geom, chan80, theta, 12e-9),
                            ula_geom, cfg)[0]
        b = spotfi_estimate(single_path_frame(ula_geom, chan80, theta, 12e-9 + shift),
                            ula_geom, cfg)[0]
        assert b.tau - a.tau == pytest.approx(shift, abs=2 * 0.25 / SPEED_OF_LIGHT)

    def test_non_ula_rejected(self, square_geom, chan80, cfg):
        frame = single_path_frame(square_geom, chan80, 0.3)
        with pytest.raises(UnsupportedGeometryError):
            spotfi_estimate(frame, square_geom, cfg)


class TestAveraging:
    def test_window_one_is_identity(self, square_geom, chan80, cfg):
        frame = single_path_frame(square_geom, chan80, 0.4)
        profile = bartlett_profile(frame, square_geom, cfg)
        merged = average_profiles([profile], 1)
        assert np.allclose(merged.values, profile.values)

    def test_commutes_with_normalization_up_to_scale(self, square_geom, chan80, cfg):
        frames = [single_path_frame(square_geom, chan80, 0.4, snr_db=10.0, seed=s)
                  for s in range(4)]
        profiles = [bartlett_profile(f, square_geom, cfg) for f in frames]
        merged = average_profiles(profiles, 4)
        raw_mean = np.mean([p.values for p in profiles], axis=0)
        assert np.allclose(merged.values, raw_mean / raw_mean.max(), atol=1e-12)

    def test_grid_mismatch_rejected(self, square_geom, chan80):
        a = bartlett_profile(single_path_frame(square_geom, chan80, 0.0),
                             square_geom, AoaConfig())
        b = bartlett_profile(single_path_frame(square_geom, chan80, 0.0),
                             square_geom,
                             AoaConfig(dist_grid=np.arange(0.0, 10.0, 0.5)))
        with pytest.raises(DimensionMismatchError):
            average_profiles([a, b], 2)

    def test_averager_matches_batch(self, square_geom, chan80, cfg):
        frames = [single_path_frame(square_geom, chan80, -0.2, snr_db=5.0, seed=s)
                  for s in range(6)]
        profiles = [bartlett_profile(f, square_geom, cfg) for f in frames]
        averager = ProfileAverager(window=4)
        out = None
        for p in profiles:
            out = averager.push(p)
        batch = average_profiles(profiles, 4)
        assert np.allclose(out.values, batch.values)

    def test_suppresses_randomly_phased_reflection(self, square_geom, chan80, rng):
        # one frozen window where some per-packet argmaxes stray but the
        # 20-packet average lands on the direct path
        cfg = AoaConfig(theta_grid=np.radians(np.arange(-87.0, 90.1, 3.0)),
                        dist_grid=np.arange(0.0, 15.0 + 1e-9, 0.75))
        th_d, tau_d = np.radians(20.0), 15e-9
        th_r, tau_r = np.radians(-60.0), 35e-9
        rel = 10 ** (-3 / 20)
        ti = np.argmin(np.abs(cfg.theta_grid - th_d))
        di = np.argmin(np.abs(cfg.dist_grid - SPEED_OF_LIGHT * tau_d))
        profiles = []
        for _ in range(20):
            phase = rng.uniform(0, 2 * np.pi)
            frame = synth_frame(
                [PathComponent(aoa=th_d, delay_s=tau_d),
                 PathComponent(aoa=th_r, delay_s=tau_r,
                               amplitude=rel * np.exp(1j * phase))],
                square_geom, chan80, snr_db=10.0, rng_seed=rng,
            )
            profiles.append(bartlett_profile(frame, square_geom, cfg))
        ai, aj = average_profiles(profiles, 20).argmax_cell()
        assert abs(ai - ti) <= 1 and abs(aj - di) <= 1


class TestEstimateBearing:
    def test_rssi_floor_rejects(self, cfg):
        profile = Profile2D(values=np.ones((4, 3)), theta_grid=np.arange(4.0),
                            dist_grid=np.arange(3.0))
        result = estimate_bearing(profile, -70.0, cfg)
        assert isinstance(result, RejectedBearing)
        assert "floor" in result.reason

    def test_flat_profile_tie_breaks_to_first_grid_point(self, cfg):
        profile = Profile2D(values=np.ones((5, 2)), theta_grid=np.linspace(0, 1, 5),
                            dist_grid=np.arange(2.0))
        result = estimate_bearing(profile, -40.0, cfg)
        assert result.theta == pytest.approx(0.0)

    def test_monotone_rescaling_keeps_bearing(self, square_geom, chan80, cfg):
        frame = single_path_frame(square_geom, chan80, 0.6, snr_db=10.0, seed=3)
        spectrum = music_spectrum([frame], square_geom, cfg)
        a = estimate_bearing(spectrum, -40.0, cfg)
        b = estimate_bearing(spectrum * 42.0, -40.0, cfg)
        c = estimate_bearing(spectrum ** 2, -40.0, cfg)
        assert a.theta == b.theta == c.theta

    def test_spectrum_length_checked(self, cfg):
        with pytest.raises(DimensionMismatchError):
            estimate_bearing(np.ones(7), -40.0, cfg)


class TestTransposeForAod:
    def test_aod_estimable_from_tx_axis(self, square_geom, chan80):
        cfg = AoaConfig()
        aod = np.radians(31.0)
        frame = synth_frame([PathComponent(aoa=0.9, aod=aod, delay_s=10e-9)],
                            square_geom, chan80, tx_geom=square_geom)
        swapped = transpose_for_aod(frame, rx_index=0)
        assert swapped.n_rx == 4 and swapped.n_tx == 1
        spectrum = music_spectrum([swapped], square_geom, cfg)
        k = int(np.argmax(spectrum))
        assert abs(wrap_angle(cfg.theta_grid[k] - aod)) <= np.radians(1.0)


class TestTriangulate:
    def test_exact_intersection(self):
        target = (3.0, 4.0)
        p1, p2 = Pose2D(0.0, 4.0, 0.2), Pose2D(3.0, 0.0, -0.9)
        obs = [(p, ground_truth_bearing(p, target)) for p in (p1, p2)]
        point, residual = triangulate(obs)
        assert np.allclose(point, target, atol=1e-9)
        assert residual == pytest.approx(0.0, abs=1e-9)

    def test_needs_two_observations(self):
        with pytest.raises(DegenerateGeometryError):
            triangulate([(Pose2D(0, 0, 0), 0.3)])

    def test_parallel_rays_rejected(self):
        obs = [(Pose2D(0, 0, 0), 0.5), (Pose2D(1, 0, 0), 0.5)]
        with pytest.raises(DegenerateGeometryError):
            triangulate(obs)

    def test_noisy_bearings_converge(self, rng):
        target = np.array([4.0, 2.0])
        poses = [Pose2D(x, y, rng.uniform(-np.pi, np.pi))
                 for x, y in rng.uniform(-5, 10, (40, 2))
                 if np.hypot(x - 4, y - 2) > 1.0]
        obs = [(p, ground_truth_bearing(p, target) + rng.normal(0, 0.05)) for p in poses]
        point, _ = triangulate(obs)
        assert np.linalg.norm(point - target) < 0.3


class TestProfilePgm:
    def test_round_trip_reconstructs_unique_peak_exactly(self, tmp_path, rng):
        # argmax survives 8-bit scaling whenever the peak is unique by
        # more than 1/255 of the maximum (the documented condition)
        values = rng.uniform(0.0, 0.9, (40, 30))
        values[17, 4] = 1.0
        profile = Profile2D(values=values, theta_grid=np.linspace(-1, 1, 40),
                            dist_grid=np.linspace(0, 10, 30))
        path = tmp_path / "u.pgm"
        write_profile_pgm(path, profile, {"note": "test"})
        image, theta, dist, meta = read_profile_pgm(path)
        assert image.shape == profile.values.shape
        assert np.allclose(theta, profile.theta_grid, atol=1e-6)
        assert np.allclose(dist, profile.dist_grid, atol=1e-6)
        assert meta["note"] == "test"
        assert np.unravel_index(np.argmax(image), image.shape) == (17, 4)

    def test_bartlett_peak_plateau_preserved(self, tmp_path, square_geom, chan80, cfg):
        # a real profile's peak can be locally flat: the reconstructed
        # argmax must land within the 1/255-wide plateau of the true peak
        frame = single_path_frame(square_geom, chan80, np.radians(12.0), 20e-9)
        profile = bartlett_profile(frame, square_geom, cfg)
        path = tmp_path / "p.pgm"
        write_profile_pgm(path, profile)
        image, _, _, _ = read_profile_pgm(path)
        ti, di = np.unravel_index(np.argmax(image), image.shape)
        assert profile.values[ti, di] >= profile.values.max() - 1.0 / 255.0

    def test_constant_profile_uniform_gray(self, tmp_path):
        profile = Profile2D(values=np.full((6, 5), 0.7), theta_grid=np.arange(6.0),
                            dist_grid=np.arange(5.0))
        path = tmp_path / "c.pgm"
        write_profile_pgm(path, profile)
        image, _, _, _ = read_profile_pgm(path)
        assert np.all(image == 255)


class TestOtherBandwidths:
    @pytest.mark.parametrize("channel,bw,n_sub", [(36, 20, 52), (38, 40, 108)])
    def test_estimators_on_narrow_channels(self, channel, bw, n_sub):
        from csisense import ChannelSpec, wavelength

        chan = ChannelSpec(channel, bw)
        geom = ArrayGeometry.square(0.45 * wavelength(chan))
        cfg = AoaConfig()
        theta, tau = np.radians(-25.0), 22e-9
        frame = single_path_frame(geom, chan, theta, tau)
        assert frame.n_sub == n_sub
        profile = bartlett_profile(frame, geom, cfg)
        ti, di = profile.argmax_cell()
        assert abs(wrap_angle(profile.theta_grid[ti] - theta)) <= np.radians(1.0)
        # range resolution scales with bandwidth: allow a few cells at 20 MHz
        tol_m = 0.25 if bw >= 40 else 1.0
        assert abs(profile.dist_grid[di] - SPEED_OF_LIGHT * tau) <= tol_m
        spectrum = music_spectrum([frame], geom, cfg)
        k = int(np.argmax(spectrum))
        assert abs(wrap_angle(cfg.theta_grid[k] - theta)) <= np.radians(1.0)

    def test_spotfi_on_40mhz_ula(self):
        from csisense import ChannelSpec, wavelength

        chan = ChannelSpec(38, 40)
        ula = ArrayGeometry.uniform_linear(4, wavelength(chan) / 2, axis="y")
        cfg = AoaConfig(theta_grid=np.radians(np.arange(-89.0, 90.0)))
        theta, tau = np.radians(33.0), 30e-9
        frame = single_path_frame(ula, chan, theta, tau)
        top = spotfi_estimate(frame, ula, cfg)[0]
        assert abs(wrap_angle(top.theta - theta)) <= np.radians(1.0)
        assert abs(top.tau - tau) <= 0.5 / SPEED_OF_LIGHT
