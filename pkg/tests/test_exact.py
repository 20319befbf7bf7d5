import numpy as np
import pytest

from kzquench import exact, models
from kzquench.models import ISING, PAULI_Z, POTTS, ModelSpec
from kzquench.schedule import SweepSchedule


@pytest.mark.parametrize("family,L,preset", [(ISING, 8, "fixed_antisymmetric"), (ISING, 7, "periodic"),
                                             (POTTS, 5, "mixed_AB"), (POTTS, 5, "periodic")])
def test_matrix_free_hamiltonian_matches_dense(family, L, preset):
    spec = ModelSpec.from_preset(family, L, preset)
    H = exact.DenseHamiltonian(spec)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(spec.d**L) + 1j * rng.standard_normal(spec.d**L)
    assert np.allclose(H.apply(v, 0.7), models.full_hamiltonian(spec, 0.7) @ v)


def test_sparse_ground_state_matches_dense_route():
    spec = ModelSpec(ISING, 10)  # 1024 > 512: iterative route
    psi, e = exact.ground_state_exact(spec, 1.0)
    assert e == pytest.approx(np.linalg.eigvalsh(models.full_hamiltonian(spec, 1.0))[0], abs=1e-10)
    assert psi.norm() == pytest.approx(1.0)


def test_guard():
    with pytest.raises(ValueError, match="guard"):
        exact.DenseHamiltonian(ModelSpec(ISING, 23))


def test_adiabatic_limit_follows_ground_state():
    spec = ModelSpec.from_preset(ISING, 6, "weak")
    sched = SweepSchedule(rate=0.02, h_start=2.0, h_end=1.4, dt=0.1, measurement_stride=0)
    psi0, _ = exact.ground_state_exact(spec, 2.0)
    final = exact.evolve_exact(spec, sched, psi0, substeps=4).final
    target, _ = exact.ground_state_exact(spec, 1.4)
    assert final.fidelity(target) > 0.999


def test_static_evolution_conserves_norm_and_energy():
    spec = ModelSpec(POTTS, 5)
    psi0 = exact.DenseState.product(spec, [1.0, 0.0, 0.0])
    H = exact.DenseHamiltonian(spec)
    e0 = H.energy(psi0.amplitudes, 0.8)
    out = exact.propagate(H, psi0.amplitudes, lambda t: 0.8, 0.0, 2.0, 400)
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-9)
    assert H.energy(out, 0.8) == pytest.approx(e0, abs=1e-9)


def test_trajectory_records_measurements():
    spec = ModelSpec(ISING, 6)
    sched = SweepSchedule(rate=1.0, h_start=2.0, h_end=0.0, dt=0.1, measurement_stride=5,
                          checkpoints=(1.0,))
    psi0, _ = exact.ground_state_exact(spec, 2.0)
    traj = exact.evolve_exact(spec, sched, psi0, substeps=2)
    assert traj.fields[0] == 2.0 and traj.fields[-1] == 0.0
    assert 1.0 in traj.fields
    assert sum(traj.checkpoint) == 2


def test_periodic_profile_is_translation_invariant():
    spec = ModelSpec(POTTS, 6, topology="periodic")
    sched = SweepSchedule(rate=1.0, h_start=2.0, h_end=0.0, dt=0.1, measurement_stride=0)
    psi0, _ = exact.ground_state_exact(spec, 2.0)
    final = exact.evolve_exact(spec, sched, psi0, substeps=4).final
    from kzquench.observables import kink_profile
    for kind in ("standard", "advanced"):
        prof = kink_profile(final, kind)
        assert len(prof.values) == 6
        assert np.ptp(prof.values) < 1e-10


def test_expectation_exact_routes_agree():
    spec = ModelSpec(ISING, 5)
    psi, _ = exact.ground_state_exact(spec, 0.5)
    zz = np.kron(PAULI_Z, PAULI_Z)
    local = exact.expectation_exact(psi, ((1, 2), zz))
    full = np.kron(np.kron(np.eye(2), zz), np.eye(4))
    assert local == pytest.approx(exact.expectation_exact(psi, full))
    # standard kink count = sum_b (1 + <Z Z>)/2 for the AFM chain
    total = sum(exact.expectation_exact(psi, ((b, b + 1), zz)) for b in range(4))
    assert exact.expectation_exact(psi, "standard") == pytest.approx((4 + total) / 2)


def test_expectation_exact_rejects_bad_operators():
    spec = ModelSpec(ISING, 4)
    psi, _ = exact.ground_state_exact(spec, 1.0)
    with pytest.raises(ValueError):
        exact.expectation_exact(psi, ((0, 1), np.eye(2)))
    with pytest.raises(ValueError, match="Hermitian"):
        op = np.zeros((16, 16), dtype=complex)
        op[0, 1] = 1j
        op[1, 0] = 1j
        exact.expectation_exact(exact.DenseState.product(spec, [1, 1]), op)
