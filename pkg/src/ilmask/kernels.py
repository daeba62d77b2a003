"""Hot inner loops, each in a numba flavour and a vectorised numpy flavour.

The public names at the bottom resolve to one flavour according to
``ilmask._jit.USE_NUMBA``. Both flavours consume identical pre-drawn uniforms,
so rollouts, value iteration and map accumulation agree bit for bit; the soft
value iteration and the softmax regression agree to rounding only, because
``exp``/``log`` are not bit-reproducible across the two backends.
"""
import numpy as np

from ._jit import USE_NUMBA, njit


# -- rollouts ---------------------------------------------------------------

@njit
def _rollout_batch_nb(next_state, reward, terminal, cum_policy, start_cum, noop, u_start, u_act):
    J, T = u_act.shape
    S, A = cum_policy.shape
    states = np.empty((J, T), dtype=np.int64)
    actions = np.empty((J, T), dtype=np.int64)
    rewards = np.empty((J, T), dtype=np.float64)
    for j in range(J):
        s = S - 1
        for k in range(S):
            if u_start[j] < start_cum[k]:
                s = k
                break
        for t in range(T):
            states[j, t] = s
            if terminal[s]:
                actions[j, t] = noop
                rewards[j, t] = 0.0
                continue
            a = A - 1
            for k in range(A):
                if u_act[j, t] < cum_policy[s, k]:
                    a = k
                    break
            actions[j, t] = a
            rewards[j, t] = reward[s, a]
            s = next_state[s, a]
    return states, actions, rewards


def _first_below(u, cum):
    # index of the first cumulative entry exceeding u; last index if none does
    hit = u[:, None] < cum
    idx = hit.argmax(axis=1)
    return np.where(hit.any(axis=1), idx, cum.shape[1] - 1)


def _rollout_batch_np(next_state, reward, terminal, cum_policy, start_cum, noop, u_start, u_act):
    J, T = u_act.shape
    states = np.empty((J, T), dtype=np.int64)
    actions = np.empty((J, T), dtype=np.int64)
    rewards = np.empty((J, T), dtype=np.float64)
    s = _first_below(u_start, np.broadcast_to(start_cum, (J, start_cum.shape[0])))
    for t in range(T):
        states[:, t] = s
        done = terminal[s]
        a = _first_below(u_act[:, t], cum_policy[s])
        a = np.where(done, noop, a)
        actions[:, t] = a
        rewards[:, t] = np.where(done, 0.0, reward[s, a])
        s = np.where(done, s, next_state[s, a])
    return states, actions, rewards


# -- value iteration --------------------------------------------------------

@njit
def _value_iteration_nb(next_state, reward, n_iter):
    S, A = reward.shape
    V = np.zeros(S)
    Q = np.zeros((S, A))
    for _ in range(n_iter):
        changed = False
        for s in range(S):
            for a in range(A):
                Q[s, a] = reward[s, a] + V[next_state[s, a]]
        for s in range(S):
            best = Q[s, 0]
            for a in range(1, A):
                if Q[s, a] > best:
                    best = Q[s, a]
            if best != V[s]:
                changed = True
            V[s] = best
        if not changed:
            break
    return V, Q


def _value_iteration_np(next_state, reward, n_iter):
    V = np.zeros(reward.shape[0])
    Q = np.zeros(reward.shape)
    for _ in range(n_iter):
        Q = reward + V[next_state]
        V_new = Q.max(axis=1)
        if np.array_equal(V_new, V):
            break
        V = V_new
    return V, Q


@njit
def _soft_value_iteration_nb(next_state, reward, terminal, noop, gamma, alpha, n_iter, tol):
    S, A = reward.shape
    V = np.zeros(S)
    V_new = np.zeros(S)
    Q = np.zeros((S, A))
    for _ in range(n_iter):
        delta = 0.0
        for s in range(S):
            if terminal[s]:
                V_new[s] = reward[s, noop] + gamma * V[s]
            else:
                m = -np.inf
                for a in range(A):
                    Q[s, a] = reward[s, a] + gamma * V[next_state[s, a]]
                    if Q[s, a] > m:
                        m = Q[s, a]
                acc = 0.0
                for a in range(A):
                    acc += np.exp((Q[s, a] - m) / alpha)
                V_new[s] = m + alpha * np.log(acc)
            d = abs(V_new[s] - V[s])
            if d > delta:
                delta = d
        V[:] = V_new
        if delta < tol:
            break
    for s in range(S):
        for a in range(A):
            if terminal[s]:
                Q[s, a] = reward[s, noop] + gamma * V[s]
            else:
                Q[s, a] = reward[s, a] + gamma * V[next_state[s, a]]
    return Q


def _soft_value_iteration_np(next_state, reward, terminal, noop, gamma, alpha, n_iter, tol):
    V = np.zeros(reward.shape[0])
    term_v = reward[:, noop]
    for _ in range(n_iter):
        Q = reward + gamma * V[next_state]
        m = Q.max(axis=1)
        V_new = m + alpha * np.log(np.exp((Q - m[:, None]) / alpha).sum(axis=1))
        V_new = np.where(terminal, term_v + gamma * V, V_new)
        delta = np.abs(V_new - V).max()
        V = V_new
        if delta < tol:
            break
    Q = reward + gamma * V[next_state]
    Q[terminal] = (term_v + gamma * V)[terminal, None]
    return Q


# -- softmax regression on one-hot states -----------------------------------

@njit
def _softmax_gd_nb(counts, W0, lr, epochs):
    S, A = counts.shape
    W = W0.copy()
    n = counts.sum()
    n_s = counts.sum(axis=1)
    P = np.empty(A)
    for _ in range(epochs):
        for s in range(S):
            if n_s[s] == 0.0:
                continue
            m = W[s, 0]
            for a in range(1, A):
                if W[s, a] > m:
                    m = W[s, a]
            z = 0.0
            for a in range(A):
                P[a] = np.exp(W[s, a] - m)
                z += P[a]
            for a in range(A):
                W[s, a] -= lr * (n_s[s] * P[a] / z - counts[s, a]) / n
    return W


def _softmax_gd_np(counts, W0, lr, epochs):
    W = W0.copy()
    n = counts.sum()
    n_s = counts.sum(axis=1, keepdims=True)
    for _ in range(epochs):
        E = np.exp(W - W.max(axis=1, keepdims=True))
        P = E / E.sum(axis=1, keepdims=True)
        W -= lr * (n_s * P - counts) / n
    return W


# -- importance accumulation ------------------------------------------------

@njit
def _accumulate_nb(masks, returns):
    N, C = masks.shape
    acc = np.zeros(C)
    for i in range(N):
        r = returns[i]
        for c in range(C):
            acc[c] += r * masks[i, c]
    return acc


def _accumulate_np(masks, returns):
    acc = np.zeros(masks.shape[1])
    for i in range(masks.shape[0]):
        acc += returns[i] * masks[i]
    return acc


IMPLS = {
    "rollout_batch": (_rollout_batch_nb, _rollout_batch_np),
    "value_iteration": (_value_iteration_nb, _value_iteration_np),
    "soft_value_iteration": (_soft_value_iteration_nb, _soft_value_iteration_np),
    "softmax_gd": (_softmax_gd_nb, _softmax_gd_np),
    "accumulate": (_accumulate_nb, _accumulate_np),
}

_pick = 0 if USE_NUMBA else 1
rollout_batch = IMPLS["rollout_batch"][_pick]
value_iteration = IMPLS["value_iteration"][_pick]
soft_value_iteration = IMPLS["soft_value_iteration"][_pick]
softmax_gd = IMPLS["softmax_gd"][_pick]
accumulate = IMPLS["accumulate"][_pick]
