"""Tests for turnstile ingestion and stream files."""

import dataclasses
import math
import tracemalloc

import numpy as np
import pytest

from sketchlrf.dp import PrivacyParams
from sketchlrf.modes import Mode, PrivacyLevel
from sketchlrf.sketch import SketchKind
from sketchlrf.stream import (
    SketchState,
    StreamFormatError,
    TurnstileUpdate,
    ingest,
    ingest_all,
    ingest_matrix,
    init_state,
    read_stream,
    space_bound,
    write_stream,
)

# k=2, alpha=0.5, c=0.25 gives t=2, v=4: real sketches on an 8×6 matrix
SMALL = dict(k=2, alpha=0.5, c=0.25)


def _updates(a):
    rows, cols = np.nonzero(a)
    return [TurnstileUpdate(int(i), int(j), float(a[i, j])) for i, j in zip(rows, cols)]


def _dense_sketches(state, a):
    phi, psi, s, t_op = (op.materialize() for op in (state.phi, state.psi, state.s, state.t_op))
    return a @ phi.T, psi @ a, s @ a @ t_op.T


@pytest.mark.parametrize("sketch", ["countsketch", "srht", "gaussian", "srht-countsketch"])
def test_stream_matches_dense_oracle(rng, sketch):
    for instance in range(20):
        a = rng.standard_normal((8, 6))
        state = init_state(8, 6, seed=instance, sketch=sketch, **SMALL)
        ingest_all(state, _updates(a))
        y_c, y_r, z = _dense_sketches(state, a)

        assert np.allclose(state.y_c, y_c, atol=1e-12, rtol=0)
        assert np.allclose(state.y_r, y_r, atol=1e-12, rtol=0)
        assert np.allclose(state.z, z, atol=1e-12, rtol=0)
        assert state.updates_seen == 48


def test_small_config_produces_real_sketches():
    state = init_state(8, 6, seed=0, **SMALL)
    assert state.effective_dims == (2, 4)
    assert all(op.kind is SketchKind.COUNT_SKETCH for op in (state.phi, state.psi, state.s, state.t_op))


def test_update_order_does_not_change_countsketch_state(rng):
    a = rng.integers(-9, 10, size=(8, 6)).astype(float)
    updates = _updates(a)
    reference = init_state(8, 6, seed=3, **SMALL)
    ingest_all(reference, updates)
    for _ in range(50):
        state = init_state(8, 6, seed=3, **SMALL)
        ingest_all(state, [updates[p] for p in rng.permutation(len(updates))])
        assert np.array_equal(state.y_c, reference.y_c)
        assert np.array_equal(state.y_r, reference.y_r)
        assert np.array_equal(state.z, reference.z)


@pytest.mark.parametrize("sketch", ["srht", "gaussian"])
def test_update_order_within_tolerance(rng, sketch):
    a = rng.standard_normal((8, 6))
    updates = _updates(a)
    reference = init_state(8, 6, seed=3, sketch=sketch, **SMALL)
    ingest_all(reference, updates)
    for _ in range(50):
        state = init_state(8, 6, seed=3, sketch=sketch, **SMALL)
        ingest_all(state, [updates[p] for p in rng.permutation(len(updates))])
        assert np.allclose(state.z, reference.z, atol=1e-10, rtol=0)
        assert np.allclose(state.y_c, reference.y_c, atol=1e-10, rtol=0)


def test_ingest_matrix_equals_streaming(rng):
    a = rng.standard_normal((8, 6))
    streamed = init_state(8, 6, seed=1, **SMALL)
    ingest_all(streamed, _updates(a))
    batched = init_state(8, 6, seed=1, **SMALL)
    ingest_matrix(batched, a)
    assert np.allclose(batched.z, streamed.z, atol=1e-12)
    assert np.allclose(batched.y_r, streamed.y_r, atol=1e-12)


def test_init_with_zero_matrix_is_zero():
    state = init_state(4, 4, k=1, alpha=1.0, seed=0)
    assert not state.y_c.any() and not state.y_r.any() and not state.z.any()
    assert state.updates_seen == 0


def test_cancelling_updates_restore_state():
    state = init_state(8, 6, seed=2, sketch="gaussian", **SMALL)
    ingest(state, TurnstileUpdate(0, 0, 1.0))
    ingest(state, TurnstileUpdate(0, 0, -1.0))
    assert np.abs(state.z).max() <= 1e-12
    assert state.updates_seen == 2


def test_ingest_rejects_out_of_range():
    state = init_state(8, 6, seed=0, **SMALL)
    with pytest.raises(ValueError, match="column index 6"):
        ingest(state, TurnstileUpdate(0, 6, 1.0))
    with pytest.raises(ValueError, match="finite"):
        ingest(state, TurnstileUpdate(0, 0, math.inf))


def test_nonprivate_rejects_privacy_params():
    privacy = PrivacyParams(1.0, 1e-3, PrivacyLevel.PRIV2, 0.5)
    with pytest.raises(ValueError, match="non-private"):
        init_state(8, 6, 2, 0.5, 0, Mode.NON_PRIVATE, privacy)


def test_private_mode_requires_matching_params():
    with pytest.raises(ValueError, match="needs privacy"):
        init_state(8, 6, 2, 0.5, 0, Mode.PRIV2)
    privacy = PrivacyParams(1.0, 1e-3, PrivacyLevel.PRIV1, 0.5)
    with pytest.raises(ValueError, match="does not match"):
        init_state(8, 6, 2, 0.5, 0, Mode.PRIV2, privacy)


def test_identity_is_not_selectable():
    with pytest.raises(ValueError, match="identity"):
        init_state(8, 6, 2, 0.5, 0, sketch=SketchKind.IDENTITY)


def test_clamped_operators_become_identities():
    state = init_state(64, 48, k=5, alpha=0.5, seed=0)
    assert state.dims.t == 113
    assert state.effective_dims == (48, 48)
    assert all(op.kind is SketchKind.IDENTITY for op in (state.phi, state.psi, state.s, state.t_op))


def test_priv2_keeps_one_sided_pair(rng):
    privacy = PrivacyParams(1.0, 0.25, PrivacyLevel.PRIV2, 0.5)
    state = init_state(40, 30, 1, 0.5, 5, Mode.PRIV2, privacy, c=1.0)
    a = rng.standard_normal((40, 30))
    ingest_all(state, _updates(a))

    assert state.y_r is None and state.psi is None and state.t_op is None
    assert np.allclose(state.y_c, a @ state.phi.materialize().T, atol=1e-12)
    assert np.allclose(state.z, state.s.materialize() @ a, atol=1e-12)
    assert state.scales.rho > 0


def _priv1_state(m, n, seed=0, noise_seed=0):
    privacy = PrivacyParams(1.0, 0.25, PrivacyLevel.PRIV1, 0.5)
    return init_state(m, n, 1, 0.5, seed, Mode.PRIV1, privacy, c=0.5, noise_seed=noise_seed)


def _augmented(state, a):
    w = a.T if state.transposed else a
    p, q = w.shape
    return np.hstack([w, state.scales.sigma_min * np.eye(p)])


def test_priv1_init_seeds_augmentation():
    state = _priv1_state(12, 20)
    augmented = _augmented(state, np.zeros((12, 20)))

    assert not state.transposed
    assert state.scales.sigma_min > 0
    assert np.allclose(state.y_r, state.psi.materialize() @ augmented, atol=1e-9)
    assert np.abs(state.y_r).max() > 0


@pytest.mark.parametrize("shape", [(12, 20), (20, 12)])
def test_priv1_stream_matches_augmented_oracle(rng, shape):
    state = _priv1_state(*shape)
    a = rng.standard_normal(shape)
    ingest_all(state, _updates(a))
    augmented = _augmented(state, a)

    assert state.transposed == (shape[0] > shape[1])
    assert np.allclose(state.y_c, augmented @ state.phi_hat, atol=1e-9)
    assert np.allclose(state.y_r, state.psi.materialize() @ augmented, atol=1e-9)
    assert np.allclose(state.z, state.s.materialize() @ augmented @ state.t_op.materialize().T, atol=1e-9)


def test_priv1_operator_shapes():
    state = _priv1_state(12, 20)
    t = state.y_c.shape[1]
    assert (t, state.y_r.shape[0]) == (7, 7)
    assert state.phi_hat.shape == (32, t)
    assert state.phi.in_dim == 32
    assert state.psi.kind is SketchKind.COUNT_SKETCH


def test_priv1_ingest_matrix_equals_streaming(rng):
    a = rng.standard_normal((20, 12))
    streamed = _priv1_state(20, 12)
    ingest_all(streamed, _updates(a))
    batched = _priv1_state(20, 12)
    ingest_matrix(batched, a)
    assert np.allclose(batched.y_c, streamed.y_c, atol=1e-9)
    assert np.allclose(batched.z, streamed.z, atol=1e-9)


def test_priv1_projection_is_not_derived_from_stream_seed():
    pinned = _priv1_state(12, 20, seed=4, noise_seed=9)
    assert np.array_equal(pinned.phi_hat, _priv1_state(12, 20, seed=4, noise_seed=9).phi_hat)

    privacy = PrivacyParams(1.0, 0.25, PrivacyLevel.PRIV1, 0.5)
    first = init_state(12, 20, 1, 0.5, 4, Mode.PRIV1, privacy, c=0.5)
    second = init_state(12, 20, 1, 0.5, 4, Mode.PRIV1, privacy, c=0.5)
    assert first.summary() == second.summary()
    assert not np.array_equal(first.phi_hat, second.phi_hat)


def test_priv1_init_memory_stays_near_footprint():
    privacy = PrivacyParams(1.0, 0.25, PrivacyLevel.PRIV1, 0.5)
    tracemalloc.start()
    try:
        state = init_state(1500, 3000, 1, 0.5, 0, Mode.PRIV1, privacy, c=0.5, noise_seed=0)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    p, q = state.work_shape
    # a dense p×(q+p) augmentation would be ~100× the footprint here
    assert p * (p + q) > 50 * state.footprint()
    assert peak <= 8 * 4 * state.footprint() + 4_000_000


def test_state_has_no_update_buffer():
    names = {f.name for f in dataclasses.fields(SketchState)}
    assert not any("history" in name or "buffer" in name for name in names)


def test_footprint_counts_sketches():
    state = init_state(8, 6, seed=0, **SMALL)
    sketches = state.y_c.size + state.y_r.size + state.z.size
    assert state.footprint() == sketches + 2 * (6 + 8 + 8 + 6)


def test_summary_reports_dims_and_space():
    summary = init_state(64, 48, k=5, alpha=0.5, seed=0).summary()
    assert summary["dims"]["t"] == 113
    assert summary["effective_dims"] == [48, 48]
    assert summary["space_bound"] == space_bound(Mode.NON_PRIVATE, 64, 48, 5, 0.5)


def test_space_bound_grows_with_precision():
    assert space_bound(Mode.PRIV2, 100, 100, 3, 0.25, 1e-3) > space_bound(Mode.PRIV2, 100, 100, 3, 0.5, 1e-3)


def test_read_stream_single_update(tmp_path):
    path = tmp_path / "one.stream"
    path.write_text("% 2 2\n0 0 1.5\n")
    stream = read_stream(path)
    assert (stream.m, stream.n) == (2, 2)
    assert list(stream) == [TurnstileUpdate(0, 0, 1.5)]
    assert stream.count == 1


def test_read_stream_reports_malformed_line(tmp_path):
    path = tmp_path / "bad.stream"
    path.write_text("% 2 2\na b c\n")
    with pytest.raises(StreamFormatError) as excinfo:
        list(read_stream(path))
    assert excinfo.value.line == 2


def test_read_stream_missing_header(tmp_path):
    path = tmp_path / "headerless.stream"
    path.write_text("a b c\n")
    with pytest.raises(StreamFormatError) as excinfo:
        read_stream(path)
    assert excinfo.value.line == 1


def test_read_stream_names_out_of_range_index(tmp_path):
    path = tmp_path / "range.stream"
    path.write_text("% 2 2\n0 1 1.0\n5 0 1.0\n")
    with pytest.raises(StreamFormatError, match="row index 5") as excinfo:
        list(read_stream(path))
    assert excinfo.value.line == 3


def test_read_stream_crlf_and_comments(tmp_path):
    lf = tmp_path / "lf.stream"
    crlf = tmp_path / "crlf.stream"
    lf.write_text("# generated\n% 3 2\n\n0 1 2.5\n2 0 -1\n")
    crlf.write_bytes(b"# generated\r\n% 3 2\r\n\r\n0 1 2.5\r\n2 0 -1\r\n")
    assert list(read_stream(lf)) == list(read_stream(crlf)) == [
        TurnstileUpdate(0, 1, 2.5), TurnstileUpdate(2, 0, -1.0),
    ]


def test_write_then_read_stream(tmp_path, rng):
    a = rng.standard_normal((4, 3))
    path = tmp_path / "a.stream"
    assert write_stream(path, 4, 3, _updates(a)) == 12
    rebuilt = np.zeros((4, 3))
    for update in read_stream(path):
        rebuilt[update.i, update.j] += update.delta
    assert np.array_equal(rebuilt, a)


def test_stream_file_fixture_drives_state(stream_file, lowrank_matrix):
    stream = read_stream(stream_file)
    state = init_state(stream.m, stream.n, 3, 0.5, seed=0)
    assert ingest_all(state, stream) == lowrank_matrix.size
    assert np.allclose(state.y_c, lowrank_matrix @ state.phi.materialize().T, atol=1e-12)
