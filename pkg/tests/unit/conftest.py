import pytest

from nanofiber_probe.constants import MICROKELVIN, cesium_defaults
from nanofiber_probe.coupling_thermal import calibrate_coupling, per_state_coupling
from nanofiber_probe.dynamics import DynamicsConfig, build_probe_context
from nanofiber_probe.heating_mc import build_heating_table
from nanofiber_probe.morse_spectrum import MorsePotential, RepulsivePotential, build_bound_states

DEPTH_UK = 240.0
STIFFNESS = 5.85e6
POSITION = 231e-9
FIXTURE_SAMPLES = 20_000
FIXTURE_SEED = 7


@pytest.fixture(scope="session")
def species():
    return cesium_defaults()


@pytest.fixture(scope="session")
def ground(species):
    return MorsePotential(
        depth=DEPTH_UK * MICROKELVIN * species.constants.k_B, stiffness=STIFFNESS, position=POSITION
    )


@pytest.fixture(scope="session")
def table(ground, species):
    return build_bound_states(ground, species.mass, species.constants)


@pytest.fixture(scope="session")
def excited(ground):
    """Default excited-state repulsion: A = D, b = a."""
    return RepulsivePotential(amplitude=ground.depth, decay=ground.stiffness, position=ground.position)


@pytest.fixture(scope="session")
def calibration(table):
    return calibrate_coupling(table, 0.012, 0.024, 1.0 * MICROKELVIN)


@pytest.fixture(scope="session")
def per_state(table, calibration, excited):
    return per_state_coupling(table, calibration.profile, excited)


@pytest.fixture(scope="session")
def heating(table, excited, species):
    return build_heating_table(table, excited, species, FIXTURE_SAMPLES, seed=FIXTURE_SEED)


@pytest.fixture(scope="session")
def probe_context(table, per_state, heating, species):
    return build_probe_context(table, per_state, heating, species)


@pytest.fixture
def dynamics_config():
    return DynamicsConfig()


@pytest.fixture
def fixed_coupling_config(tmp_path):
    """A run configuration with a fixed coupling profile, so handlers skip the calibration."""
    path = tmp_path / "fixed.yaml"
    path.write_text(
        "coupling:\n"
        "  amplitude: 0.03\n"
        "  decay_length_nm: 165\n"
        "monte_carlo:\n"
        "  samples: 10000\n"
        "  seed: 3\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture
def infeasible_config(tmp_path):
    """Coupling targets no decay length can reproduce."""
    path = tmp_path / "infeasible.yaml"
    path.write_text("coupling:\n  beta_hot: 0.001\n  beta_cold: 0.4\n", encoding="utf-8")
    return path
