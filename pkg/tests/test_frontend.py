import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dualgop.errors import InsufficientAudio, InsufficientFrames, InvalidConfig, InvalidInput
from dualgop.frontend import (
    FrontendConfig,
    Waveform,
    append_deltas,
    apply_cmvn,
    compute_mfcc,
    extract_features,
    filter_center_frequencies,
    mel_energies,
    num_frames,
    read_frame_matrix,
    read_wav,
    write_frame_matrix,
    write_wav,
)

SR = 16000


def sine(freq, seconds=1.0, sr=SR):
    t = np.arange(int(seconds * sr)) / sr
    return Waveform(0.5 * np.sin(2 * np.pi * freq * t), sr)


def dft_mel_oracle(x, sr, frame=400, shift=160, n_filters=23, k=0.97):
    """Framing, pre-emphasis, Hamming window, O(N^2) DFT and HTK triangles, written out longhand."""
    n_fft = 512
    n = np.arange(frame)
    hamming = 0.54 - 0.46 * np.cos(2 * np.pi * n / (frame - 1))
    kk = np.arange(n_fft // 2 + 1)
    basis = np.exp(-2j * np.pi * np.outer(kk, np.arange(n_fft)) / n_fft)
    mel = lambda f: 1127.0 * np.log(1.0 + f / 700.0)
    inv = lambda m: 700.0 * (np.exp(m / 1127.0) - 1.0)
    edges = inv(np.linspace(0, mel(sr / 2), n_filters + 2))
    freqs = kk * sr / n_fft
    out = []
    for t in range((len(x) - frame) // shift + 1):
        seg = x[t * shift: t * shift + frame]
        pre = np.array([seg[i] - k * seg[i - 1] if i else seg[0] * (1 - k) for i in range(frame)])
        padded = np.zeros(n_fft)
        padded[:frame] = pre * hamming
        mag = np.abs(basis @ padded)
        row = []
        for m in range(n_filters):
            lo, c, hi = edges[m:m + 3]
            tri = np.maximum(0.0, np.minimum((freqs - lo) / (c - lo), (hi - freqs) / (hi - c)))
            row.append(tri @ mag)
        out.append(row)
    return np.array(out)


def test_frame_count_one_second():
    f = compute_mfcc(sine(440))
    assert f.shape == (98, 13)
    assert num_frames(16000, 400, 160) == (16000 - 400) // 160 + 1 == 98


@pytest.mark.parametrize("n,expected", [(399, 0), (400, 1), (559, 1), (560, 2)])
def test_num_frames_edges(n, expected):
    assert num_frames(n, 400, 160) == expected


def test_zero_waveform_is_finite():
    f = compute_mfcc(Waveform(np.zeros(SR), SR))
    assert np.all(np.isfinite(f))
    assert np.all(np.isfinite(extract_features(Waveform(np.zeros(SR), SR))))


def test_sine_energy_matches_direct_dft():
    w = sine(1000, seconds=0.1)
    ours = mel_energies(w)
    oracle = dft_mel_oracle(w.samples, SR)
    np.testing.assert_allclose(ours, oracle, rtol=1e-9, atol=1e-9)
    edges = np.concatenate([[0.0], filter_center_frequencies(23, SR), [SR / 2]])
    covering = [m for m in range(23) if edges[m] < 1000 < edges[m + 2]]
    assert int(np.argmax(ours.mean(axis=0))) in covering
    # the two filters covering 1 kHz carry most of the energy
    share = ours.mean(axis=0)[covering].sum() / ours.mean(axis=0).sum()
    assert share > 0.5


def test_short_and_bad_waveforms():
    with pytest.raises(InsufficientAudio):
        compute_mfcc(Waveform(np.zeros(399), SR))
    x = np.zeros(SR)
    x[5] = np.nan
    with pytest.raises(InvalidInput):
        compute_mfcc(Waveform(x, SR))


def test_config_validation():
    with pytest.raises(InvalidConfig):
        FrontendConfig(frame_length_ms=5, frame_shift_ms=10)
    with pytest.raises(InvalidConfig):
        FrontendConfig(num_cepstra=30)


def test_delta_constant_is_zero():
    f = np.tile(np.arange(13.0), (20, 1))
    out = append_deltas(f)
    assert out.shape == (20, 39)
    assert np.all(out[:, 13:] == 0.0)
    np.testing.assert_array_equal(out[:, :13], f)


def test_delta_on_ramp():
    v = np.linspace(-1, 2, 13)
    f = np.arange(30.0)[:, None] * v
    out = append_deltas(f, window=2)
    np.testing.assert_allclose(out[2:-2, 13:26], np.tile(v, (26, 1)), atol=1e-12)
    # delta of a constant delta is zero away from the edges
    np.testing.assert_allclose(out[4:-4, 26:], 0.0, atol=1e-12)


def test_delta_window_validation():
    with pytest.raises(InvalidConfig):
        append_deltas(np.zeros((5, 3)), window=0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 4)),
              elements=st.floats(-100, 100)), st.floats(-50, 50))
def test_delta_translation_invariant(f, c):
    a = append_deltas(f)
    b = append_deltas(f + c)
    d = f.shape[1]
    np.testing.assert_allclose(a[:, d:], b[:, d:], atol=1e-9)


def test_cmvn_hand_example():
    out = apply_cmvn(np.array([[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(out[:, 0], [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)


def test_cmvn_constant_column():
    f = np.column_stack([np.full(10, 3.5), np.arange(10.0)])
    out = apply_cmvn(f)
    assert np.all(out[:, 0] == 0.0)


def test_cmvn_statistics(rng):
    f = rng.normal(3.0, 5.0, size=(200, 39))
    out = apply_cmvn(f)
    assert np.max(np.abs(out.mean(axis=0))) < 1e-10
    assert np.max(np.abs(out.var(axis=0) - 1.0)) < 1e-8


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 40), st.integers(1, 5)),
              elements=st.floats(-1e3, 1e3)))
def test_cmvn_idempotent(f):
    once = apply_cmvn(f)
    np.testing.assert_allclose(apply_cmvn(once), once, atol=1e-8)


def test_cmvn_needs_two_frames():
    with pytest.raises(InsufficientFrames):
        apply_cmvn(np.zeros((1, 3)))


def test_extract_features_shape():
    noise = np.random.default_rng(0).normal(0, 0.1, 8000)
    f = extract_features(Waveform(noise, SR))
    assert f.shape == (48, 39)
    assert np.max(np.abs(f.mean(axis=0))) < 1e-10


def test_wav_round_trip(tmp_path):
    w = sine(700, 0.05)
    write_wav(tmp_path / "a.wav", w)
    back = read_wav(tmp_path / "a.wav")
    assert back.sample_rate == SR
    np.testing.assert_allclose(back.samples, w.samples, atol=1.0 / 32768)


def test_frame_matrix_round_trip(tmp_path, rng):
    f = rng.normal(size=(7, 5))
    write_frame_matrix(tmp_path / "f.csv", f)
    np.testing.assert_array_equal(read_frame_matrix(tmp_path / "f.csv"), f)
    assert (tmp_path / "f.csv").read_text().startswith("c0,c1,c2,c3,c4\n")
    np.save(tmp_path / "f.npy", f)
    np.testing.assert_array_equal(read_frame_matrix(tmp_path / "f.npy"), f)
