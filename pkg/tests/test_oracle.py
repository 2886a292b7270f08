import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from impedance_maps import oracle
from impedance_maps.errors import GlancingRay, LambdaOutOfRange
from impedance_maps.experiments import bruteforce_comparison
from impedance_maps.maps import SignWord
from impedance_maps.oracle import (
    CoincidentDeposits,
    MeasureEnsemble,
    PhasePoint,
    WeightedDirac,
    composite_prediction,
    model1_norm_prediction,
    nilpotence_index,
    propagate_to_interface,
    reflection_factor,
    witness_data,
)
from impedance_maps.raytrace import trace_ray
from impedance_maps.reference import two_wave
from impedance_maps.solver import CellGeometry

UNIT = CellGeometry(1.0, 1.0, 1.0, 1.0)


def test_model1_closed_form():
    assert model1_norm_prediction(UNIT, -1) == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-12)
    assert model1_norm_prediction(UNIT, 1) == 1.0


def test_nilpotence_index():
    assert nilpotence_index(1.0, 1.0, 1.0, 0.6) == pytest.approx(4 / 3)
    with pytest.raises(LambdaOutOfRange):
        nilpotence_index(1.0, 1.0, 1.0, 1.0)


@pytest.mark.parametrize("theta", [0.0, 0.3, 0.9, 1.3])
def test_reflection_factor_matches_plane_wave_coefficient(theta):
    _, R = two_wave(10.0, theta, 0.0)
    assert reflection_factor(math.sin(theta)) == pytest.approx(abs(R) ** 2, abs=1e-14)


def test_glancing_rejected():
    with pytest.raises(GlancingRay):
        PhasePoint(0.5, 1.0)


def test_model1_single_deposit():
    xi = math.sin(0.3)
    out = propagate_to_interface(MeasureEnsemble.single(0.2, xi), UNIT, -1, model="model1")
    (atom,) = out.atoms
    assert atom.point.x == pytest.approx(0.2 + math.tan(0.3))
    assert atom.mass == pytest.approx(reflection_factor(xi))
    plus = propagate_to_interface(MeasureEnsemble.single(0.2, xi), UNIT, 1, model="model1")
    assert plus.total_mass() == pytest.approx(1.0)


def test_ray_leaving_through_top_deposits_nothing():
    out = propagate_to_interface(MeasureEnsemble.single(0.9, 0.6), UNIT, 1, model="model1")
    assert len(out) == 0


def test_model2_deposit_sequence_and_mass_decay():
    xi = 0.05
    out = propagate_to_interface(MeasureEnsemble.single(0.1, xi), UNIT, -1, max_bounces=5, mass_floor=0.0)
    assert [a.direction for a in out.atoms][:4] == ["in", "out", "in", "out"]
    assert np.all(np.diff([a.point.x for a in out.atoms]) > 0)
    masses = [a.mass for a in out.atoms if a.direction == "in"]
    assert np.all(np.diff(masses) < 0)
    # the default floor drops crossings once the reflected mass is negligible
    assert len(propagate_to_interface(MeasureEnsemble.single(0.1, xi), UNIT, -1, max_bounces=5)) < len(out)


def test_coincident_deposits_merge_with_warning():
    a = WeightedDirac(PhasePoint(0.3, 0.1), 0.25)
    with pytest.warns(CoincidentDeposits):
        ens = MeasureEnsemble.build([a, a])
    assert len(ens) == 1 and ens.total_mass() == pytest.approx(0.5)


def test_rows_schema():
    rows = MeasureEnsemble.single(0.3, 0.1, 2.0).to_rows()
    assert set(rows[0]) == {"interface", "x", "xi", "mass", "direction", "bounces"}


@pytest.mark.parametrize("convention", oracle.CONVENTIONS)
def test_oracle_matches_event_tracer(convention):
    res = bruteforce_comparison(40, seed=7, max_bounces=20, convention=convention)
    assert res["count_mismatches"] == 0
    assert res["max_position_error"] <= 1e-12
    assert res["max_mass_error"] <= 1e-12


@settings(max_examples=80, deadline=None)
@given(
    st.floats(0.05, 0.95), st.floats(-0.95, 0.95), st.sampled_from([-1, 1]),
    st.floats(0.3, 2.0), st.floats(0.2, 2.0), st.floats(0.1, 2.0),
)
def test_oracle_tracer_property(x, xi, iota, h, d_l, d_r):
    geom = CellGeometry(h, d_l, d_r, 1.0)
    x *= h
    ens = propagate_to_interface(MeasureEnsemble.single(x, xi), geom, iota, max_bounces=10)
    ref = trace_ray(x, xi, geom, iota, max_bounces=10)
    assert len(ens) == len(ref)
    for a, b in zip(sorted(ens.atoms, key=lambda a: a.point.x), sorted(ref, key=lambda d: d.x)):
        assert a.point.x == pytest.approx(b.x, abs=1e-12)
        assert a.mass == pytest.approx(b.mass, abs=1e-12)


def test_witness_slopes():
    assert witness_data(SignWord.parse("+")).point.xi == 0.25
    assert witness_data(SignWord.parse("-")).point.xi == 0.125
    w = witness_data(SignWord.parse("+-+"))
    assert all(0 < y < 1 for y in w.positions)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_witness_mass_at_least_one(n):
    import itertools
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoincidentDeposits)
        for signs in itertools.product((1, -1), repeat=n):
            word = SignWord(signs, {1: (1.0, 1.0, 1.0), -1: (1.0, 1.0, 1.0)})
            w = witness_data(word)
            mass = composite_prediction(MeasureEnsemble.single(w.point.x, w.point.xi), word)
            assert mass >= 1.0 - 1e-12


def test_coherent_ensemble_mass_and_center():
    ens = oracle.coherent_state_ensemble(0.5, 0.3, 400.0)
    assert ens.total_mass() == pytest.approx(1.0, abs=1e-9)
    mean_xi = sum(a.mass * a.point.xi for a in ens.atoms)
    assert mean_xi == pytest.approx(0.3, abs=1e-9)
