"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

Every kernel is written once, as a plain function over float64 arrays using a
numba-compatible numpy subset.  At import time the backend is chosen from the
``RISBEAM_BACKEND`` environment variable:

  RISBEAM_BACKEND=numba   force JIT compilation (error if numba is missing)
  RISBEAM_BACKEND=numpy   run the same functions uncompiled
  unset                   numba when importable, numpy otherwise

``get_impls(name)`` returns either namespace explicitly, which is what the
benchmark script and the backend-equivalence tests use.

Network parameters live in one flat float64 vector; the ``layout`` argument
is an int64 array [n_in, h1, h2, n_act, start_0..start_12, total] describing
the 13 parameter blocks (actor W1,b1,W2,b2,W3,b3, log_std, critic
V1,c1,V2,c2,V3,c3), in that order.  Kernels reshape slices of the flat
vector in place, so gradient and Adam updates write through.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

__all__ = ["BACKEND", "get_impls", "gae_advantages", "actor_forward",
           "critic_forward", "actor_log_prob", "ppo_loss_grad",
           "a2c_loss_grad", "adam_step"]

_LOG_2PI = float(np.log(2.0 * np.pi))


# ---------------------------------------------------------------------------
# kernel implementations (numba-compatible numpy subset, float64 throughout)
# ---------------------------------------------------------------------------

def _gae_advantages(rewards, values, gamma, lam):
    """Backward GAE recursion: adv[t] = delta[t] + gamma*lam*adv[t+1]."""
    n = rewards.shape[0]
    adv = np.empty(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * values[t + 1] - values[t]
        last = delta + gamma * lam * last
        adv[t] = last
    return adv


def _actor_forward(theta, layout, obs):
    """tanh(W3 relu(W2 relu(W1 x + b1) + b2) + b3) for a (B, n_in) batch."""
    n_in = int(layout[0])
    h1 = int(layout[1])
    h2 = int(layout[2])
    na = int(layout[3])
    w1 = theta[layout[4]:layout[5]].reshape(n_in, h1)
    b1 = theta[layout[5]:layout[6]]
    w2 = theta[layout[6]:layout[7]].reshape(h1, h2)
    b2 = theta[layout[7]:layout[8]]
    w3 = theta[layout[8]:layout[9]].reshape(h2, na)
    b3 = theta[layout[9]:layout[10]]
    a1 = obs @ w1 + b1.reshape(1, h1)
    z1 = np.maximum(a1, 0.0)
    a2 = z1 @ w2 + b2.reshape(1, h2)
    z2 = np.maximum(a2, 0.0)
    return np.tanh(z2 @ w3 + b3.reshape(1, na))


def _critic_forward(theta, layout, obs):
    """Linear-head value estimate for a (B, n_in) batch; returns (B,)."""
    n_in = int(layout[0])
    h1 = int(layout[1])
    h2 = int(layout[2])
    v1 = theta[layout[11]:layout[12]].reshape(n_in, h1)
    c1 = theta[layout[12]:layout[13]]
    v2 = theta[layout[13]:layout[14]].reshape(h1, h2)
    c2 = theta[layout[14]:layout[15]]
    v3 = theta[layout[15]:layout[16]].reshape(h2, 1)
    c3 = theta[layout[16]:layout[17]]
    a1 = obs @ v1 + c1.reshape(1, h1)
    z1 = np.maximum(a1, 0.0)
    a2 = z1 @ v2 + c2.reshape(1, h2)
    z2 = np.maximum(a2, 0.0)
    return (z2 @ v3).reshape(-1) + c3[0]


def _actor_log_prob(theta, layout, obs, z):
    """Diagonal-Gaussian log density of pre-clip samples z under the actor.

    The forward pass is repeated inline (not shared) so that this function and
    the loss kernels evaluate the density with an identical operation order;
    probability ratios at unchanged parameters are then exactly one.
    """
    n_in = int(layout[0])
    h1 = int(layout[1])
    h2 = int(layout[2])
    na = int(layout[3])
    w1 = theta[layout[4]:layout[5]].reshape(n_in, h1)
    b1 = theta[layout[5]:layout[6]]
    w2 = theta[layout[6]:layout[7]].reshape(h1, h2)
    b2 = theta[layout[7]:layout[8]]
    w3 = theta[layout[8]:layout[9]].reshape(h2, na)
    b3 = theta[layout[9]:layout[10]]
    log_std = theta[layout[10]:layout[11]]
    a1 = obs @ w1 + b1.reshape(1, h1)
    z1 = np.maximum(a1, 0.0)
    a2 = z1 @ w2 + b2.reshape(1, h2)
    z2 = np.maximum(a2, 0.0)
    mean = np.tanh(z2 @ w3 + b3.reshape(1, na))
    sigma = np.exp(log_std)
    t = (z - mean) / sigma.reshape(1, na)
    return (-np.sum(log_std) - 0.5 * _LOG_2PI * na
            - 0.5 * np.sum(t * t, axis=1))


def _ppo_loss_grad(theta, layout, obs, z, logp_old, adv, ret, clip_eps,
                   value_coef):
    """Gradient of clipped surrogate + value_coef * value MSE, full batch.

    Returns (grad, policy_loss, value_loss), with grad in the flat layout.
    Advantages are taken as given (normalize before calling).  The unclipped
    branch is selected on ties, so the gradient is zero exactly where the clip
    is active on the advantageous side.
    """
    n_in = int(layout[0])
    h1 = int(layout[1])
    h2 = int(layout[2])
    na = int(layout[3])
    batch = obs.shape[0]

    w1 = theta[layout[4]:layout[5]].reshape(n_in, h1)
    b1 = theta[layout[5]:layout[6]]
    w2 = theta[layout[6]:layout[7]].reshape(h1, h2)
    b2 = theta[layout[7]:layout[8]]
    w3 = theta[layout[8]:layout[9]].reshape(h2, na)
    b3 = theta[layout[9]:layout[10]]
    log_std = theta[layout[10]:layout[11]]

    # actor forward, keeping pre-activations for the backward pass
    a1 = obs @ w1 + b1.reshape(1, h1)
    z1 = np.maximum(a1, 0.0)
    a2 = z1 @ w2 + b2.reshape(1, h2)
    z2 = np.maximum(a2, 0.0)
    mean = np.tanh(z2 @ w3 + b3.reshape(1, na))

    sigma = np.exp(log_std)
    t = (z - mean) / sigma.reshape(1, na)
    tt = t * t
    logp = -np.sum(log_std) - 0.5 * _LOG_2PI * na - 0.5 * np.sum(tt, axis=1)

    ratio = np.exp(logp - logp_old)
    clipped = np.minimum(np.maximum(ratio, 1.0 - clip_eps), 1.0 + clip_eps)
    obj_raw = ratio * adv
    obj_clip = clipped * adv
    policy_loss = -np.mean(np.minimum(obj_raw, obj_clip))

    # d(loss)/d(logp): only samples where the unclipped branch is selected
    g_lp = np.where(obj_raw <= obj_clip, -(adv * ratio) / batch,
                    np.zeros(batch))

    grad = np.zeros(theta.shape[0])
    g_lp2 = g_lp.reshape(batch, 1)
    dmean = g_lp2 * t / sigma.reshape(1, na)
    grad[layout[10]:layout[11]] = np.sum(g_lp2 * (tt - 1.0), axis=0)

    da3 = dmean * (1.0 - mean * mean)
    grad[layout[8]:layout[9]] = (z2.T @ da3).reshape(-1)
    grad[layout[9]:layout[10]] = np.sum(da3, axis=0)
    dz2 = da3 @ w3.T
    da2 = np.where(a2 > 0.0, dz2, np.zeros(dz2.shape))
    grad[layout[6]:layout[7]] = (z1.T @ da2).reshape(-1)
    grad[layout[7]:layout[8]] = np.sum(da2, axis=0)
    dz1 = da2 @ w2.T
    da1 = np.where(a1 > 0.0, dz1, np.zeros(dz1.shape))
    grad[layout[4]:layout[5]] = (obs.T @ da1).reshape(-1)
    grad[layout[5]:layout[6]] = np.sum(da1, axis=0)

    # critic forward/backward (MSE against returns)
    v1 = theta[layout[11]:layout[12]].reshape(n_in, h1)
    c1 = theta[layout[12]:layout[13]]
    v2 = theta[layout[13]:layout[14]].reshape(h1, h2)
    c2 = theta[layout[14]:layout[15]]
    v3 = theta[layout[15]:layout[16]].reshape(h2, 1)
    c3 = theta[layout[16]:layout[17]]

    ca1 = obs @ v1 + c1.reshape(1, h1)
    cz1 = np.maximum(ca1, 0.0)
    ca2 = cz1 @ v2 + c2.reshape(1, h2)
    cz2 = np.maximum(ca2, 0.0)
    vals = (cz2 @ v3).reshape(-1) + c3[0]

    resid = vals - ret
    value_loss = np.mean(resid * resid)
    dv = (value_coef * 2.0 / batch) * resid

    dv2 = dv.reshape(batch, 1)
    grad[layout[15]:layout[16]] = (cz2.T @ dv2).reshape(-1)
    grad[layout[16]:layout[17]] = np.sum(dv2, axis=0)
    dcz2 = dv2 @ v3.T
    dca2 = np.where(ca2 > 0.0, dcz2, np.zeros(dcz2.shape))
    grad[layout[13]:layout[14]] = (cz1.T @ dca2).reshape(-1)
    grad[layout[14]:layout[15]] = np.sum(dca2, axis=0)
    dcz1 = dca2 @ v2.T
    dca1 = np.where(ca1 > 0.0, dcz1, np.zeros(dcz1.shape))
    grad[layout[11]:layout[12]] = (obs.T @ dca1).reshape(-1)
    grad[layout[12]:layout[13]] = np.sum(dca1, axis=0)

    return grad, policy_loss, value_loss


def _a2c_loss_grad(theta, layout, obs, z, adv, ret, value_coef):
    """Gradient of -mean(logpi * adv) + value_coef * value MSE, full batch."""
    n_in = int(layout[0])
    h1 = int(layout[1])
    h2 = int(layout[2])
    na = int(layout[3])
    batch = obs.shape[0]

    w1 = theta[layout[4]:layout[5]].reshape(n_in, h1)
    b1 = theta[layout[5]:layout[6]]
    w2 = theta[layout[6]:layout[7]].reshape(h1, h2)
    b2 = theta[layout[7]:layout[8]]
    w3 = theta[layout[8]:layout[9]].reshape(h2, na)
    b3 = theta[layout[9]:layout[10]]
    log_std = theta[layout[10]:layout[11]]

    a1 = obs @ w1 + b1.reshape(1, h1)
    z1 = np.maximum(a1, 0.0)
    a2 = z1 @ w2 + b2.reshape(1, h2)
    z2 = np.maximum(a2, 0.0)
    mean = np.tanh(z2 @ w3 + b3.reshape(1, na))

    sigma = np.exp(log_std)
    t = (z - mean) / sigma.reshape(1, na)
    tt = t * t
    logp = -np.sum(log_std) - 0.5 * _LOG_2PI * na - 0.5 * np.sum(tt, axis=1)

    policy_loss = -np.mean(logp * adv)
    g_lp = -adv / batch

    grad = np.zeros(theta.shape[0])
    g_lp2 = g_lp.reshape(batch, 1)
    dmean = g_lp2 * t / sigma.reshape(1, na)
    grad[layout[10]:layout[11]] = np.sum(g_lp2 * (tt - 1.0), axis=0)

    da3 = dmean * (1.0 - mean * mean)
    grad[layout[8]:layout[9]] = (z2.T @ da3).reshape(-1)
    grad[layout[9]:layout[10]] = np.sum(da3, axis=0)
    dz2 = da3 @ w3.T
    da2 = np.where(a2 > 0.0, dz2, np.zeros(dz2.shape))
    grad[layout[6]:layout[7]] = (z1.T @ da2).reshape(-1)
    grad[layout[7]:layout[8]] = np.sum(da2, axis=0)
    dz1 = da2 @ w2.T
    da1 = np.where(a1 > 0.0, dz1, np.zeros(dz1.shape))
    grad[layout[4]:layout[5]] = (obs.T @ da1).reshape(-1)
    grad[layout[5]:layout[6]] = np.sum(da1, axis=0)

    v1 = theta[layout[11]:layout[12]].reshape(n_in, h1)
    c1 = theta[layout[12]:layout[13]]
    v2 = theta[layout[13]:layout[14]].reshape(h1, h2)
    c2 = theta[layout[14]:layout[15]]
    v3 = theta[layout[15]:layout[16]].reshape(h2, 1)
    c3 = theta[layout[16]:layout[17]]

    ca1 = obs @ v1 + c1.reshape(1, h1)
    cz1 = np.maximum(ca1, 0.0)
    ca2 = cz1 @ v2 + c2.reshape(1, h2)
    cz2 = np.maximum(ca2, 0.0)
    vals = (cz2 @ v3).reshape(-1) + c3[0]

    resid = vals - ret
    value_loss = np.mean(resid * resid)
    dv = (value_coef * 2.0 / batch) * resid

    dv2 = dv.reshape(batch, 1)
    grad[layout[15]:layout[16]] = (cz2.T @ dv2).reshape(-1)
    grad[layout[16]:layout[17]] = np.sum(dv2, axis=0)
    dcz2 = dv2 @ v3.T
    dca2 = np.where(ca2 > 0.0, dcz2, np.zeros(dcz2.shape))
    grad[layout[13]:layout[14]] = (cz1.T @ dca2).reshape(-1)
    grad[layout[14]:layout[15]] = np.sum(dca2, axis=0)
    dcz1 = dca2 @ v2.T
    dca1 = np.where(ca1 > 0.0, dcz1, np.zeros(dcz1.shape))
    grad[layout[11]:layout[12]] = (obs.T @ dca1).reshape(-1)
    grad[layout[12]:layout[13]] = np.sum(dca1, axis=0)

    return grad, policy_loss, value_loss


def _adam_step(theta, grad, m, v, step, lr, beta1, beta2, eps):
    """Bias-corrected adaptive-moment update, in place; step is the new count
    (pass it as float so both backends evaluate the corrections identically).

    theta -= lr * m_hat / (sqrt(v_hat) + eps) with the corrections factored
    out of the loop.  Written as a single pass so the compiled version
    allocates nothing; the numpy backend swaps in the vectorized twin below
    (same per-element arithmetic, so results are bit-identical).
    """
    mc = 1.0 - beta1 ** step
    vc = 1.0 - beta2 ** step
    alpha = lr / mc
    scale = 1.0 / np.sqrt(vc)
    omb1 = 1.0 - beta1
    omb2 = 1.0 - beta2
    for i in range(theta.shape[0]):
        g = grad[i]
        mi = beta1 * m[i] + omb1 * g
        vi = beta2 * v[i] + omb2 * (g * g)
        m[i] = mi
        v[i] = vi
        theta[i] -= alpha * mi / (np.sqrt(vi) * scale + eps)


def _adam_step_numpy(theta, grad, m, v, step, lr, beta1, beta2, eps):
    """Vectorized fallback for _adam_step (a compiled scalar loop is faster)."""
    mc = 1.0 - beta1 ** step
    vc = 1.0 - beta2 ** step
    alpha = lr / mc
    scale = 1.0 / np.sqrt(vc)
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    theta -= alpha * m / (np.sqrt(v) * scale + eps)


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

_IMPL_FUNCS = {
    "gae_advantages": _gae_advantages,
    "actor_forward": _actor_forward,
    "critic_forward": _critic_forward,
    "actor_log_prob": _actor_log_prob,
    "ppo_loss_grad": _ppo_loss_grad,
    "a2c_loss_grad": _a2c_loss_grad,
    "adam_step": _adam_step,
}

_BACKENDS: dict[str, SimpleNamespace] = {}


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def get_impls(name: str) -> SimpleNamespace:
    """Return the kernel namespace for backend 'numpy' or 'numba' (compiling lazily)."""
    if name not in ("numpy", "numba"):
        raise ValueError(f"unknown backend {name!r}")
    if name not in _BACKENDS:
        if name == "numpy":
            funcs = dict(_IMPL_FUNCS)
            funcs["adam_step"] = _adam_step_numpy
            _BACKENDS[name] = SimpleNamespace(**funcs)
        else:
            import numba

            jit = numba.njit(cache=True)
            _BACKENDS[name] = SimpleNamespace(
                **{key: jit(fn) for key, fn in _IMPL_FUNCS.items()}
            )
    return _BACKENDS[name]


def _resolve_backend() -> str:
    choice = os.environ.get("RISBEAM_BACKEND", "").strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not numba_available():
            raise ImportError("RISBEAM_BACKEND=numba but numba is not importable")
        return "numba"
    if choice:
        raise ValueError(f"RISBEAM_BACKEND must be 'numba' or 'numpy', got {choice!r}")
    return "numba" if numba_available() else "numpy"


BACKEND = _resolve_backend()
_active = get_impls(BACKEND)

gae_advantages = _active.gae_advantages
actor_forward = _active.actor_forward
critic_forward = _active.critic_forward
actor_log_prob = _active.actor_log_prob
ppo_loss_grad = _active.ppo_loss_grad
a2c_loss_grad = _active.a2c_loss_grad
adam_step = _active.adam_step
