"""Actor-critic network with a Gaussian policy head, trained by hand.

The network is a four-layer perceptron: input (state, dimension kappa), a
shared sigmoid hidden layer of size H, then one more sigmoid hidden layer
of size H for each head.  The actor output is a linear map to an action
mean in the cell-embedding space; the critic output is a linear map to a
scalar value.  Keeping the output layers linear is what lets the action
mean reach arbitrary points of the embedding space and the value estimate
track unbounded returns.

Gradients are computed by explicit reverse-mode formulas rather than an
autodiff framework, and every formula is checked against central finite
differences in the tests.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, fields
from typing import Union

import numpy as np

from .errors import NumericError

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-3
# Maximum slope of the sigmoid, reached at 0.
SIGMOID_MAX_SLOPE = 0.25

ADAM_LR = 3e-4
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class PolicyParameters:
    """All learnable arrays; weight matrices are (out, in)."""

    shared_w: np.ndarray
    shared_b: np.ndarray
    actor_hidden_w: np.ndarray
    actor_hidden_b: np.ndarray
    actor_out_w: np.ndarray
    actor_out_b: np.ndarray
    critic_hidden_w: np.ndarray
    critic_hidden_b: np.ndarray
    critic_out_w: np.ndarray
    critic_out_b: np.ndarray
    log_sigma: np.ndarray

    @property
    def kappa(self) -> int:
        return int(self.shared_w.shape[1])

    @property
    def hidden(self) -> int:
        return int(self.shared_w.shape[0])

    @property
    def sigma(self) -> float:
        return float(np.exp(self.log_sigma))

    def as_dict(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def copy(self) -> "PolicyParameters":
        return PolicyParameters(**{k: v.copy() for k, v in self.as_dict().items()})


PARAM_NAMES = tuple(f.name for f in fields(PolicyParameters))


@dataclass
class OptimizerState:
    """Adam moments (one pair of arrays per parameter) and the step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def zero_gradients(params: PolicyParameters) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.as_dict().items()}


def mean_nearest_neighbor_distance(vectors: np.ndarray) -> float:
    """Mean over rows of the distance to the closest other row (0 if < 2 rows)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    n = vectors.shape[0]
    if n < 2:
        return 0.0
    d2 = np.sum((vectors[:, None, :] - vectors[None, :, :]) ** 2, axis=2)
    np.fill_diagonal(d2, np.inf)
    return float(np.mean(np.sqrt(np.min(d2, axis=1))))


def init_params(
    kappa: int,
    hidden: int,
    seed: int,
    embedding_table: Union[np.ndarray, "object"],
) -> tuple[PolicyParameters, OptimizerState]:
    """Seeded Xavier-uniform weights, zero biases, and the exploration scale.

    The initial standard deviation of the policy is half the mean
    nearest-neighbor distance among the cell embeddings, so early samples
    land near real cells; a degenerate table (all rows identical, or a
    single row) falls back to a floor of 1e-3 with a warning.
    """
    if kappa < 1 or hidden < 1:
        raise ValueError(f"kappa and hidden must be >= 1, got {kappa}, {hidden}")
    vectors = getattr(embedding_table, "vectors", embedding_table)
    rng = np.random.default_rng(seed)

    def xavier(out_dim: int, in_dim: int) -> np.ndarray:
        limit = math.sqrt(6.0 / (in_dim + out_dim))
        return rng.uniform(-limit, limit, size=(out_dim, in_dim))

    params = PolicyParameters(
        shared_w=xavier(hidden, kappa),
        shared_b=np.zeros(hidden),
        actor_hidden_w=xavier(hidden, hidden),
        actor_hidden_b=np.zeros(hidden),
        actor_out_w=xavier(kappa, hidden),
        actor_out_b=np.zeros(kappa),
        critic_hidden_w=xavier(hidden, hidden),
        critic_hidden_b=np.zeros(hidden),
        critic_out_w=xavier(1, hidden),
        critic_out_b=np.zeros(1),
        log_sigma=np.zeros(()),
    )
    sigma = 0.5 * mean_nearest_neighbor_distance(vectors)
    if sigma < SIGMA_FLOOR:
        logger.warning(
            "degenerate embedding table (mean NN distance %.3g); "
            "flooring sigma at %.0e",
            2.0 * sigma,
            SIGMA_FLOOR,
        )
        sigma = SIGMA_FLOOR
    params.log_sigma = np.array(math.log(sigma))
    opt = OptimizerState(
        m={k: np.zeros_like(v) for k, v in params.as_dict().items()},
        v={k: np.zeros_like(v) for k, v in params.as_dict().items()},
        step=0,
    )
    return params, opt


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def forward(
    params: PolicyParameters, state_vec: np.ndarray
) -> tuple[np.ndarray, float, dict[str, np.ndarray]]:
    """Evaluate both heads on one state; the cache feeds the backward pass."""
    s = np.asarray(state_vec, dtype=np.float64)
    if s.shape != (params.kappa,):
        raise ValueError(f"state has shape {s.shape}, expected ({params.kappa},)")
    if not np.all(np.isfinite(s)):
        raise NumericError("state vector contains non-finite values")
    h1 = _sigmoid(params.shared_w @ s + params.shared_b)
    h2a = _sigmoid(params.actor_hidden_w @ h1 + params.actor_hidden_b)
    mu = params.actor_out_w @ h2a + params.actor_out_b
    h2c = _sigmoid(params.critic_hidden_w @ h1 + params.critic_hidden_b)
    value = float((params.critic_out_w @ h2c + params.critic_out_b)[0])
    cache = {"s": s, "h1": h1, "h2a": h2a, "h2c": h2c}
    return mu, value, cache


def gaussian_log_density(
    action: np.ndarray, mu: np.ndarray, sigma: float
) -> tuple[float, np.ndarray, float]:
    """Log density of an isotropic Gaussian and its gradients.

    Returns (logp, d logp / d mu, d logp / d sigma) for covariance
    sigma^2 I over kappa = len(action) coordinates.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    action = np.asarray(action, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if action.shape != mu.shape:
        raise ValueError(f"shape mismatch: action {action.shape} vs mu {mu.shape}")
    kappa = action.size
    diff = action - mu
    sq = float(diff @ diff)
    logp = -0.5 * kappa * math.log(2.0 * math.pi) - kappa * math.log(sigma) - sq / (
        2.0 * sigma * sigma
    )
    grad_mu = diff / (sigma * sigma)
    grad_sigma = (sq - kappa * sigma * sigma) / sigma**3
    return logp, grad_mu, grad_sigma


def sample_action(mu: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Draw one action from N(mu, sigma^2 I)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    mu = np.asarray(mu, dtype=np.float64)
    return mu + sigma * rng.standard_normal(mu.shape)


def param_gradients(
    params: PolicyParameters,
    cache: dict[str, np.ndarray],
    upstream_mu_grad: np.ndarray,
    upstream_value_grad: float,
) -> dict[str, np.ndarray]:
    """Exact gradients of upstream_mu . mu + upstream_value * value.

    The shared layer accumulates contributions from both heads.  The
    log_sigma entry is zero here because the network does not read sigma;
    the training loop adds the density term itself.
    """
    s, h1, h2a, h2c = cache["s"], cache["h1"], cache["h2a"], cache["h2c"]
    g_mu = np.asarray(upstream_mu_grad, dtype=np.float64)
    if g_mu.shape != (params.kappa,):
        raise ValueError(
            f"upstream mu gradient has shape {g_mu.shape}, expected ({params.kappa},)"
        )
    g_v = float(upstream_value_grad)

    grads = zero_gradients(params)

    # Actor head: linear output, then sigmoid hidden layer.
    grads["actor_out_w"] = np.outer(g_mu, h2a)
    grads["actor_out_b"] = g_mu.copy()
    dz2a = (params.actor_out_w.T @ g_mu) * h2a * (1.0 - h2a)
    grads["actor_hidden_w"] = np.outer(dz2a, h1)
    grads["actor_hidden_b"] = dz2a
    dh1_actor = params.actor_hidden_w.T @ dz2a

    # Critic head.
    grads["critic_out_w"] = (g_v * h2c)[None, :]
    grads["critic_out_b"] = np.array([g_v])
    dz2c = (g_v * params.critic_out_w[0]) * h2c * (1.0 - h2c)
    grads["critic_hidden_w"] = np.outer(dz2c, h1)
    grads["critic_hidden_b"] = dz2c
    dh1_critic = params.critic_hidden_w.T @ dz2c

    # Shared layer sees the sum of both head contributions.
    dz1 = (dh1_actor + dh1_critic) * h1 * (1.0 - h1)
    grads["shared_w"] = np.outer(dz1, s)
    grads["shared_b"] = dz1
    return grads


def input_gradient(
    params: PolicyParameters,
    cache: dict[str, np.ndarray],
    upstream_mu_grad: np.ndarray,
    upstream_value_grad: float,
) -> np.ndarray:
    """Gradient of upstream_mu . mu + upstream_value * value w.r.t. the state."""
    h1, h2a, h2c = cache["h1"], cache["h2a"], cache["h2c"]
    g_mu = np.asarray(upstream_mu_grad, dtype=np.float64)
    dz2a = (params.actor_out_w.T @ g_mu) * h2a * (1.0 - h2a)
    dz2c = (float(upstream_value_grad) * params.critic_out_w[0]) * h2c * (1.0 - h2c)
    dh1 = params.actor_hidden_w.T @ dz2a + params.critic_hidden_w.T @ dz2c
    dz1 = dh1 * h1 * (1.0 - h1)
    return params.shared_w.T @ dz1


def adam_step(
    params: PolicyParameters,
    grads: dict[str, np.ndarray],
    opt_state: OptimizerState,
    lr: float = ADAM_LR,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> tuple[PolicyParameters, OptimizerState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    step = opt_state.step + 1
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, value in params.as_dict().items():
        g = grads[name]
        if g.shape != value.shape:
            raise ValueError(f"gradient {name} has shape {g.shape}, expected {value.shape}")
        m = beta1 * opt_state.m[name] + (1.0 - beta1) * g
        v = beta2 * opt_state.v[name] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        new_params[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return PolicyParameters(**new_params), OptimizerState(m=new_m, v=new_v, step=step)


def spectral_norm(w: np.ndarray) -> float:
    """Largest singular value of a weight matrix."""
    return float(np.linalg.norm(w, 2))


def actor_smoothness_bound(params: PolicyParameters) -> float:
    """Upper bound on ||mu(x) - mu(x')|| / ||x - x'|| along the actor path.

    Each sigmoid layer contracts by at most the maximum sigmoid slope, so
    the product of spectral norms times 0.25 per sigmoid layer bounds the
    change of the action mean.
    """
    return (
        SIGMOID_MAX_SLOPE**2
        * spectral_norm(params.shared_w)
        * spectral_norm(params.actor_hidden_w)
        * spectral_norm(params.actor_out_w)
    )


def critic_smoothness_bound(params: PolicyParameters) -> float:
    """Same bound along the critic path, for the scalar value output."""
    return (
        SIGMOID_MAX_SLOPE**2
        * spectral_norm(params.shared_w)
        * spectral_norm(params.critic_hidden_w)
        * spectral_norm(params.critic_out_w)
    )


def save_checkpoint(params: PolicyParameters, seed: int, path: str) -> None:
    """Write all arrays, the exploration scale, and the seed as JSON.

    JSON floats round-trip exactly (shortest-repr serialization), so a
    reloaded checkpoint is bit-identical.
    """
    doc = {
        "kappa": params.kappa,
        "hidden": params.hidden,
        "seed": seed,
        "arrays": {k: v.tolist() for k, v in params.as_dict().items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_checkpoint(path: str) -> tuple[PolicyParameters, int]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    arrays = {k: np.array(v, dtype=np.float64) for k, v in doc["arrays"].items()}
    params = PolicyParameters(**arrays)
    if params.kappa != doc["kappa"] or params.hidden != doc["hidden"]:
        raise ValueError(f"{path}: checkpoint shape metadata does not match arrays")
    return params, int(doc["seed"])
