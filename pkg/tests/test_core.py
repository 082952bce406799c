import numpy as np
import pytest

from hotforge.core import (DEFAULT_CONSTANTS, DEFAULT_GRID, FIELD_NAMES, Grid,
                           NormalizationConstants, TemperatureContour,
                           UnknownFieldError, WorkpieceState,
                           contour_node_indices, denormalize_field,
                           extract_contour, normalize_field, state_to_tensor,
                           tensor_to_state)


def test_grid_defaults():
    g = Grid()
    assert g.n_nodes == 231
    assert g.dz0 == pytest.approx(5.0 / 20)
    assert g.dr0 == pytest.approx(2.5 / 10)


def test_grid_rejects_degenerate():
    with pytest.raises(ValueError):
        Grid(n_axial=1)


def test_normalize_temperature_limits():
    assert normalize_field(np.array([938.0]), DEFAULT_CONSTANTS, "temperature")[0] == 0.0
    assert normalize_field(np.array([1450.0]), DEFAULT_CONSTANTS, "temperature")[0] == 1.0
    assert normalize_field(np.array([1194.0]), DEFAULT_CONSTANTS, "temperature")[0] == 0.5


def test_normalize_rx_identity():
    assert normalize_field(np.array([0.5]), DEFAULT_CONSTANTS, "rx")[0] == 0.5


def test_normalize_clamps_outside_limits():
    vals = normalize_field(np.array([900.0, 1500.0]), DEFAULT_CONSTANTS, "temperature")
    assert vals[0] == 0.0 and vals[1] == 1.0


def test_normalize_unknown_field():
    with pytest.raises(UnknownFieldError):
        normalize_field(np.zeros(3), DEFAULT_CONSTANTS, "porosity")


def test_denormalize_examples():
    assert denormalize_field(np.array([0.0]), DEFAULT_CONSTANTS, "temperature")[0] == 938.0
    assert denormalize_field(np.array([1.0]), DEFAULT_CONSTANTS, "grain")[0] == 70.0


def test_round_trip_inside_limits():
    x = np.array([1200.0])
    back = denormalize_field(normalize_field(x, DEFAULT_CONSTANTS, "temperature"),
                             DEFAULT_CONSTANTS, "temperature")
    assert back[0] == pytest.approx(1200.0, rel=1e-6)


def test_round_trip_all_fields():
    rng = np.random.default_rng(0)
    for name in FIELD_NAMES:
        lo = DEFAULT_CONSTANTS.minimum(name)
        span = DEFAULT_CONSTANTS.span(name)
        x = lo + span * rng.random(50)
        back = denormalize_field(normalize_field(x, DEFAULT_CONSTANTS, name),
                                 DEFAULT_CONSTANTS, name)
        assert np.allclose(back, x, rtol=1e-6, atol=1e-9)


def test_constants_reject_nonpositive_range():
    with pytest.raises(ValueError):
        NormalizationConstants({"temperature": (0.0, 0.0)})


def test_constants_override_round_trip():
    c = DEFAULT_CONSTANTS.with_override("eqplast", 0.0, 1.5)
    assert c.span("eqplast") == 1.5
    assert NormalizationConstants.from_dict(c.as_dict()).span("eqplast") == 1.5


def test_contour_order_is_documented_bijection():
    idx = contour_node_indices()
    assert len(idx) == 31
    assert idx[0] == (20, 0)
    assert idx[10] == (20, 10)
    assert idx[11] == (19, 10)
    assert idx[-1] == (0, 10)
    expected = {(20, c) for c in range(11)} | {(r, 10) for r in range(20)}
    assert set(idx) == expected and len(set(idx)) == len(idx)


def test_extract_contour_uniform():
    state = WorkpieceState.initial(1200.0)
    contour = extract_contour(state)
    assert contour.values.shape == (31,)
    assert np.allclose(contour.values, (1200.0 - 938.0) / 512.0)


def test_extract_contour_at_lower_limit():
    state = WorkpieceState.initial(938.0)
    assert np.all(extract_contour(state).values == 0.0)


def test_extract_contour_ramp_matches_indices():
    state = WorkpieceState.initial(1000.0)
    ramp = 938.0 + np.arange(231, dtype=float).reshape(21, 11)
    state.temperature = ramp
    contour = extract_contour(state)
    # brute-force index enumeration
    for k, (r, c) in enumerate(contour_node_indices()):
        assert contour.values[k] == pytest.approx((ramp[r, c] - 938.0) / 512.0)


def test_contour_length_enforced():
    with pytest.raises(ValueError):
        TemperatureContour(np.zeros(30))


def test_contour_clamps_values():
    c = TemperatureContour(np.linspace(-0.5, 1.5, 31))
    assert c.values.min() >= 0.0 and c.values.max() <= 1.0


def test_state_tensor_round_trip():
    state = WorkpieceState.initial(1100.0)
    state.grain[:] = 40.0
    state.rx[:] = 0.25
    t = state_to_tensor(state)
    assert t.shape == (6, 21, 11)
    back = tensor_to_state(t)
    assert np.allclose(back.temperature, 1100.0)
    assert np.allclose(back.grain, 40.0)
    assert np.allclose(back.rx, 0.25)


def test_tensor_to_state_shape_check():
    with pytest.raises(ValueError):
        tensor_to_state(np.zeros((6, 11, 21)))


def test_state_validate_flags_bad_rx():
    state = WorkpieceState.initial(1200.0)
    state.rx[0, 0] = 1.5
    with pytest.raises(ValueError):
        state.validate()


def test_state_validate_flags_sign_convention():
    state = WorkpieceState.initial(1200.0)
    state.uy[2, 3] = 0.5
    with pytest.raises(ValueError):
        state.validate()
