import numpy as np
import pytest
import torch

from divmarl.envs.base import EnvSpec


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def micro_spec() -> EnvSpec:
    """Small dimensions so exhaustive and finite-difference checks stay cheap."""
    return EnvSpec(n_agents=2, n_actions=3, obs_dim=4, state_dim=5, episode_limit=4)


def finite_difference_gradients(fn, params: list[torch.Tensor], eps: float = 1e-6) -> list[torch.Tensor]:
    """Central-difference gradient of a scalar fn() w.r.t. each parameter tensor.

    Parameters must be float64 leaves; fn must be deterministic and depend on
    them only through values (re-evaluated under no_grad with perturbations).
    """
    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat = p.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                hi = float(fn())
                flat[i] = orig - eps
                lo = float(fn())
                flat[i] = orig
                gflat[i] = (hi - lo) / (2.0 * eps)
            grads.append(g)
    return grads


def relative_gradient_error(analytic: list[torch.Tensor], numeric: list[torch.Tensor]) -> float:
    """max_i |a_i - n_i| / max(1, |a|_inf) over all parameter entries."""
    a = torch.cat([g.reshape(-1) for g in analytic])
    n = torch.cat([g.reshape(-1) for g in numeric])
    scale = max(1.0, float(a.abs().max()))
    return float((a - n).abs().max()) / scale


def assert_gradients_match(fn, params: list[torch.Tensor], tol: float = 1e-4) -> float:
    """Compare autograd gradients of fn() against central finite differences."""
    for p in params:
        assert p.dtype == torch.float64, "gradient checks need float64 parameters"
        p.grad = None
    value = fn()
    value.backward()
    analytic = [p.grad.clone() if p.grad is not None else torch.zeros_like(p) for p in params]
    numeric = finite_difference_gradients(fn, params)
    err = relative_gradient_error(analytic, numeric)
    assert err <= tol, f"gradient mismatch: relative error {err:.3e} > {tol}"
    return err


def make_rng(seed: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))
