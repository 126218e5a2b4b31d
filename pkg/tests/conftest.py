import numpy as np
import pytest

from fdmec.energy import Instance
from fdmec.units import GroupPartition, ScenarioSpec, SystemConfig, UserProfile, generate_scenario


def unit_config(**changes):
    """B = 1 Hz, noise 1 W and no self-interference, so c = sigma^2 + gamma q = 1."""
    base = dict(bandwidth_hz=1.0, noise_power_w=1.0, self_interference_coeff=0.0,
                user_max_power_w=1.0, slot_duration_s=1.0)
    base.update(changes)
    return SystemConfig(**base)


def small_instance(seed, user_count=4, cfg=None, **scenario):
    cfg = cfg or SystemConfig()
    users, partition = generate_scenario(ScenarioSpec(user_count=user_count, rng_seed=seed, **scenario), cfg)
    return Instance(users, partition, cfg)


def passive_user(gain):
    """A user with nothing to compute: it never needs energy or airtime."""
    return UserProfile(gain, gain, 0.8, 0.0, 1000.0, 1e-10, 1e9)


def two_phase_toy(rng, cfg=None):
    """One active user alone in phase 0 and a passive user in phase 1.

    The active user harvests only while the BS broadcasts in phase 1, so the
    free variables are (q1, t0, t1, d0).
    """
    cfg = cfg or SystemConfig()
    h1 = rng.uniform(3e-3, 2e-2)
    h2 = h1 * rng.uniform(0.3, 1.0)
    active = UserProfile(h1, h1, 0.8, rng.uniform(1e5, 5e5), rng.uniform(500, 1500), 1e-10, 1e9)
    return [active, passive_user(h2)], GroupPartition(((0,), (1,))), cfg


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
