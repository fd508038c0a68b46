import math

import pytest

from cobra_ilc import plant as pl
from cobra_ilc.controllers import ManeuverProfile
from cobra_ilc.flight import ControllerConfig, SimSetup
from cobra_ilc.loopshape import derive_gains

GAINS = derive_gains(0.24, 81.0)

# acceptance criteria append (number, passed, detail) here; printed in the terminal summary
ACCEPTANCE: list[tuple[int, bool, str]] = []


def ideal_plant(**kw) -> pl.PlantConfig:
    """Plant that is exactly the controller's model: G = 1, no lag, no aero, no noise."""
    base = dict(aero=False, inner_loop="ideal", tau_att=0.0, k_va=0.0,
                std_alt=0.0, std_vel=0.0, std_lat=0.0, std_accel=0.0)
    base.update(kw)
    return pl.PlantConfig(**base)


def make_setup(plant=None, profile=None, disturbance=None, k_l=2.27, **kw) -> SimSetup:
    return SimSetup(plant or pl.PlantConfig(),
                    ControllerConfig(GAINS, k_l=k_l),
                    profile or ManeuverProfile(),
                    disturbance or pl.DisturbanceProfile(),
                    **kw)


def short_profile(**kw) -> ManeuverProfile:
    base = dict(theta_level=math.radians(-82.0), head_up=math.radians(80.0), lead_in=0.5,
                ramp_up=1.0, hold=0.5, ramp_down=1.0, settle=1.0)
    base.update(kw)
    return ManeuverProfile(**base)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def gains():
    return GAINS
