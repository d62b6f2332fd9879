"""rotacell: max-min fair beamforming and boresight optimization for
cell-free downlinks with mechanically rotatable antenna panels.

Layers, bottom up:

* :mod:`rotacell.scenario` - geometry, constants, config handling
* :mod:`rotacell.channel` - orientation-dependent channel synthesis and
  its derivatives
* :mod:`rotacell.conic` - dense second-order cone programming
* :mod:`rotacell.beamform` - SINR-balancing beamformer design
* :mod:`rotacell.orient_sca` - successive convex approximation over
  panel orientations with beams held fixed
* :mod:`rotacell.orient_fw` - beamforming-free orientation pre-design on
  the spherical cap
* :mod:`rotacell.drivers` - end-to-end optimizers and baselines
* :mod:`rotacell.harness` - Monte Carlo sweeps, CSV emission, CLI
"""

__version__ = "0.1.0"

from .scenario import (  # noqa: F401
    ApConfig,
    ConfigError,
    Scatterer,
    Scenario,
    boresight_rotation,
    build_scenario,
    dbm_to_watts,
    default_config,
    element_global_position,
    grid_index,
    load_config,
    sample_cap_uniform,
    scenario_from_seed,
)
