import numpy as np
import pytest

from kzquench import exact, models, mps
from kzquench.models import ISING, POTTS, ModelSpec
from kzquench.schedule import SweepSchedule

EXACT_PARAMS = mps.EngineParams(max_bond=1024, sv_cutoff=0.0)


def dense_rdm(vec, L, d, first, width):
    v = vec.reshape(d**first, d**width, d ** (L - first - width))
    return np.einsum("aib,ajb->ij", v, v.conj())


# ------------------------------------------------------------- canonical form


def test_random_state_is_normalized_and_canonical():
    psi = mps.MPS.random(8, 3, 6, rng=0)
    assert psi.norm() == pytest.approx(1.0)
    for c in (0, 3, 7):
        psi.move_center(c)
        assert psi.isometry_residuals() < 1e-12
    assert psi.norm() == pytest.approx(1.0)


def test_gauge_moves_preserve_the_state():
    psi = mps.MPS.random(7, 2, 4, rng=1)
    v0 = psi.to_dense()
    psi.move_center(6)
    psi.move_center(2)
    assert np.allclose(psi.to_dense(), v0)


def test_inconsistent_bonds_rejected():
    with pytest.raises(ValueError):
        mps.MPS([np.ones((1, 2, 2)), np.ones((3, 2, 1))])
    with pytest.raises(ValueError):
        mps.MPS([np.ones((2, 2, 1))])


def test_zero_state_rejected():
    psi = mps.MPS([np.zeros((1, 2, 1))] * 4)
    with pytest.raises(FloatingPointError):
        psi.canonicalize(0)


def test_product_state_labels():
    spec = ModelSpec(ISING, 4)
    v = mps.product_state(spec, "udud").to_dense()
    assert v[int("0101", 2)] == pytest.approx(1.0)
    plus = mps.product_state(spec, "++++").to_dense()
    assert np.allclose(plus, np.full(16, 0.25))
    lam = mps.product_state(ModelSpec(POTTS, 4), models.LAMBDA0).to_dense()
    assert np.allclose(np.abs(lam) ** 2, 1 / 81)
    with pytest.raises(ValueError):
        mps.product_state(spec, "udu")
    with pytest.raises(ValueError):
        mps.product_state(spec, "udAx")


# --------------------------------------------------------- reduced densities


@pytest.mark.parametrize("first,width", [(0, 1), (2, 3), (3, 4), (5, 2)])
def test_rdm_matches_partial_trace(first, width):
    psi = mps.MPS.random(7, 2, 5, rng=2)
    rho = mps.reduced_density_matrix(psi, first, width)
    want = dense_rdm(psi.to_dense(), 7, 2, first, width)
    assert np.allclose(rho, want, atol=1e-12)
    assert np.trace(rho).real == pytest.approx(1.0)
    assert np.allclose(rho, rho.conj().T)
    assert np.linalg.eigvalsh(rho).min() > -1e-12


def test_window_probabilities_match_rdm_diagonals():
    psi = mps.MPS.random(6, 3, 5, rng=3)
    probs = mps.window_probabilities(psi, 3)
    for i in range(4):
        rho = dense_rdm(psi.to_dense(), 6, 3, i, 3)
        assert np.allclose(probs[i], np.real(np.diag(rho)), atol=1e-12)


def test_rdm_window_bounds():
    psi = mps.MPS.random(5, 2, 3, rng=4)
    with pytest.raises(ValueError):
        mps.reduced_density_matrix(psi, 3, 3)
    with pytest.raises(ValueError):
        mps.reduced_density_matrix(psi, 0, mps.MAX_RDM_WIDTH + 1)


# ---------------------------------------------------------------------- TEBD


def test_gate_application_without_truncation_is_exact():
    spec = ModelSpec.from_preset(ISING, 6, "weak")
    psi = mps.MPS.random(6, 2, 8, rng=5)
    v = psi.to_dense()
    layers = models.trotter_gates(spec, 0.7, 0.1)
    mps.apply_layers(psi, layers, 64, 0.0)
    for layer in layers:
        for b, g in layer:
            v = exact.apply_gate_dense(v, spec, b, g)
    assert np.allclose(psi.to_dense(), v, atol=1e-12)
    assert psi.isometry_residuals() < 1e-12
    assert psi.discarded_weight < 1e-20


def test_truncation_tracks_discarded_weight():
    spec = ModelSpec(POTTS, 6)
    psi = mps.MPS.random(6, 3, 27, rng=6)
    rep = mps.apply_layers(psi, models.trotter_gates(spec, 1.0, 0.1), 2, 0.0)
    assert max(psi.bond_dims) <= 2
    assert rep.total_discarded > 0
    assert psi.discarded_weight == pytest.approx(rep.total_discarded)
    assert psi.norm() == pytest.approx(1.0)


@pytest.mark.parametrize("family,preset", [(ISING, "fixed_antisymmetric"), (POTTS, "mixed_AB")])
def test_tebd_ramp_matches_dense_circuit(family, preset):
    spec = ModelSpec.from_preset(family, 6, preset)
    sched = SweepSchedule(rate=2.0, h_start=1.6, h_end=0.4, dt=0.1, measurement_stride=0)
    psi, _ = exact.ground_state_exact(spec, sched.h_start)
    ref = exact.evolve_trotter_dense(spec, sched, psi).final.amplitudes
    m = mps.dmrg_ground_state(spec, sched.h_start, EXACT_PARAMS)[0]
    for step in sched.steps():
        mps.tebd_sweep_step(m, spec, step.h_mid, EXACT_PARAMS, dt=step.dt)
    assert abs(abs(np.vdot(ref, m.to_dense())) - 1) < 1e-10


# ---------------------------------------------------------------------- DMRG


def test_mpo_reproduces_hamiltonian():
    spec = ModelSpec.from_preset(POTTS, 5, "fixed_antisymmetric")
    psi = mps.MPS.random(5, 3, 9, rng=7)
    W = mps.build_mpo(spec, 0.8)
    v = psi.to_dense()
    want = np.vdot(v, models.full_hamiltonian(spec, 0.8) @ v).real
    assert mps.mpo_expectation(psi, W) == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("family,L,preset", [(ISING, 10, "fixed_symmetric"), (POTTS, 6, "free")])
def test_dmrg_matches_exact_ground_energy(family, L, preset):
    spec = ModelSpec.from_preset(family, L, preset)
    psi, e, ok = mps.dmrg_ground_state(spec, 1.0, mps.EngineParams(max_bond=64, sv_cutoff=0.0))
    dense, e_ex = exact.ground_state_exact(spec, 1.0)
    assert ok and e == pytest.approx(e_ex, abs=1e-9)
    assert abs(abs(np.vdot(dense.amplitudes, psi.to_dense())) - 1) < 1e-6


def test_dmrg_high_field_is_near_product():
    spec = ModelSpec(ISING, 8)
    psi, _, ok = mps.dmrg_ground_state(spec, 50.0, mps.EngineParams(max_bond=16))
    assert ok
    plus = mps.product_state(spec, "+" * 8)
    assert abs(psi.overlap(plus)) ** 2 > 0.99


def test_dmrg_refuses_periodic_chain():
    with pytest.raises(ValueError):
        mps.dmrg_ground_state(ModelSpec(ISING, 6, topology="periodic"), 1.0, EXACT_PARAMS)


# ----------------------------------------------------------------- snapshots


def test_snapshot_round_trip(tmp_path):
    psi = mps.MPS.random(6, 3, 4, rng=8)
    psi.discarded_weight = 1.5e-9
    path = tmp_path / "psi.npz"
    mps.save_snapshot(path, psi, {"rate": 0.25})
    back, meta = mps.load_snapshot(path)
    assert meta == {"rate": 0.25}
    assert back.center == psi.center and back.discarded_weight == psi.discarded_weight
    for a, b in zip(psi.tensors, back.tensors):
        assert np.array_equal(a, b)


def test_snapshot_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, header=np.frombuffer(b'{"format": "other"}', dtype=np.uint8))
    with pytest.raises(ValueError):
        mps.load_snapshot(path)
