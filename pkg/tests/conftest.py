import pytest

from bangride import oracle_trajectory, run_closed_loop
from bangride.config import build_scenario, load_scenario


@pytest.fixture(scope="session")
def scenarios():
    """Built packaged scenarios, keyed by name."""
    return {name: build_scenario(load_scenario(name))
            for name in ("spmet", "ecm", "pack", "toy")}


@pytest.fixture(scope="session")
def free_runs(scenarios):
    """One model-free run per packaged scenario, with wall time."""
    import time
    out = {}
    for name, built in scenarios.items():
        t0 = time.perf_counter()
        traj = run_closed_loop(built.model, built.new_controller(), built.spec,
                               built.cfg.t_f, built.x0, model_name=built.cfg.model,
                               seed=built.cfg.seed, config_hash=built.config_hash)
        out[name] = (traj, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="session")
def oracle_runs(scenarios):
    """One ideal bang-ride run per packaged scenario."""
    out = {}
    for name, built in scenarios.items():
        out[name] = oracle_trajectory(built.model, built.spec, built.cfg.t_f,
                                      built.x0, built.root_cfg,
                                      model_name=built.cfg.model,
                                      seed=built.cfg.seed)
    return out
