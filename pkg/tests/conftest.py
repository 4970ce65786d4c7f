import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from beamctl.config import (
    AxisConfig, BeamlineConfig, DetectorConfig, EncoderConfig, MotorConfig,
)
from beamctl.hardware import GaussianPeak
from beamctl.kinematics import MonoConfig


STD_MONO = MonoConfig(
    line_density=1200.0, order=1, fixed_focus_ratio=2.25,
    energy_min=50.0, energy_max=1000.0)


def make_config(clock_mode="scaled", clock_factor=1000.0,
                detector_peaks=(GaussianPeak(400.0, 900.0, 2.0),),
                detector_background=100.0, noise="none",
                tick_period_s=0.001, velocity_sps=20000.0,
                mono=STD_MONO) -> BeamlineConfig:
    return BeamlineConfig(
        mono=mono,
        axes={
            "mirror": AxisConfig(motor="mirror_pitch",
                                 steps_per_degree=3600.0, offset_deg=0.0),
            "grating": AxisConfig(motor="grating_pitch",
                                  steps_per_degree=3600.0, offset_deg=0.0),
        },
        motors=(
            MotorConfig(name="mirror_pitch", home_steps=0,
                        velocity_sps=velocity_sps,
                        soft_min=-400000, soft_max=400000),
            MotorConfig(name="grating_pitch", home_steps=0,
                        velocity_sps=velocity_sps,
                        soft_min=-400000, soft_max=400000),
        ),
        encoders=(
            EncoderConfig(name="mirror_enc", motor="mirror_pitch",
                          counts_per_step=1.0),
            EncoderConfig(name="grating_enc", motor="grating_pitch",
                          counts_per_step=1.0),
        ),
        detectors=(
            DetectorConfig(name="det", background_cps=detector_background,
                           peaks=tuple(detector_peaks), noise=noise, seed=42),
        ),
        tick_period_s=tick_period_s,
        clock_mode=clock_mode,
        clock_factor=clock_factor,
    )


@pytest.fixture
def std_mono():
    return STD_MONO


@pytest.fixture
def instance():
    """A running instance with a fast scaled clock; ticker started."""
    from beamctl.server import BeamlineInstance
    inst = BeamlineInstance(make_config())
    inst.start_ticker()
    yield inst
    inst.stop_ticker()
