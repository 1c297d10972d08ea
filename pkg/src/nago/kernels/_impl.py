"""Kernel source shared by the numba and pure-numpy backends.

``build(jit)`` returns the three hot functions, compiled with ``jit``
(numba's ``njit``) or left as plain numpy code (``jit=None``).  The body
is written in the numba-compatible subset of numpy, so both backends run
the same arithmetic in the same order; each backend is bit-deterministic
because every random number (minibatch indices, momentum noise) is drawn
outside and passed in.

The regressor is a fixed 3-hidden-layer tanh MLP with ``h`` units per
layer and ``n_out`` linear outputs.  Parameter vector layout:
W1(d*h) b1(h) W2(h*h) b2(h) W3(h*h) b3(h) W4(h*n_out) b4(n_out),
optionally followed by one scalar (the constant-noise parameter of the
homoscedastic variant).  The sampler is the scale-adapted variant of
stochastic-gradient Hamiltonian Monte Carlo: during burn-in it estimates
per-parameter gradient scales and uses them as a frozen preconditioner
afterwards.  Gradients are of (mean minibatch Gaussian NLL) +
(Gaussian prior) / n_data.
"""

from __future__ import annotations

import numpy as np


def build(jit=None):
    dec = jit if jit is not None else (lambda f: f)

    @dec
    def nll_and_grad(w, X, y, h, n_out, het, noise_floor, prior_var, n_data):
        """Mean Gaussian NLL of a minibatch plus scaled prior, and its gradient."""
        m, d = X.shape
        o = 0
        W1 = np.ascontiguousarray(w[o : o + d * h]).reshape(d, h); o += d * h
        b1 = w[o : o + h]; o += h
        W2 = np.ascontiguousarray(w[o : o + h * h]).reshape(h, h); o += h * h
        b2 = w[o : o + h]; o += h
        W3 = np.ascontiguousarray(w[o : o + h * h]).reshape(h, h); o += h * h
        b3 = w[o : o + h]; o += h
        W4 = np.ascontiguousarray(w[o : o + h * n_out]).reshape(h, n_out); o += h * n_out
        b4 = w[o : o + n_out]; o += n_out
        mlp_size = o

        a1 = np.tanh(np.dot(X, W1) + b1)
        a2 = np.tanh(np.dot(a1, W2) + b2)
        a3 = np.tanh(np.dot(a2, W3) + b3)
        out = np.dot(a3, W4) + b4

        mu = out[:, 0]
        resid = mu - y
        if het:
            s = out[:, 1]
            sp = np.where(s > 30.0, s, np.log1p(np.exp(np.minimum(s, 30.0))))
            var = sp + noise_floor
        else:
            rho = w[w.shape[0] - 1]
            sp_scalar = rho if rho > 30.0 else np.log1p(np.exp(min(rho, 30.0)))
            var = np.full(m, sp_scalar + noise_floor)

        nll = 0.5 * np.log(2.0 * np.pi * var) + resid * resid / (2.0 * var)
        loss = nll.sum() / m

        dmu = resid / var / m
        dvar = (0.5 / var - resid * resid / (2.0 * var * var)) / m

        dout = np.zeros((m, n_out))
        dout[:, 0] = dmu
        if het:
            s = out[:, 1]
            dout[:, 1] = dvar * (1.0 / (1.0 + np.exp(-s)))

        dW4 = np.dot(np.ascontiguousarray(a3.T), dout)
        db4 = np.sum(dout, 0)
        da3 = np.dot(dout, np.ascontiguousarray(W4.T))
        dz3 = da3 * (1.0 - a3 * a3)
        dW3 = np.dot(np.ascontiguousarray(a2.T), dz3)
        db3 = np.sum(dz3, 0)
        da2 = np.dot(dz3, np.ascontiguousarray(W3.T))
        dz2 = da2 * (1.0 - a2 * a2)
        dW2 = np.dot(np.ascontiguousarray(a1.T), dz2)
        db2 = np.sum(dz2, 0)
        da1 = np.dot(dz2, np.ascontiguousarray(W2.T))
        dz1 = da1 * (1.0 - a1 * a1)
        dW1 = np.dot(np.ascontiguousarray(X.T), dz1)
        db1 = np.sum(dz1, 0)

        grad = np.empty_like(w)
        o = 0
        grad[o : o + d * h] = dW1.ravel(); o += d * h
        grad[o : o + h] = db1; o += h
        grad[o : o + h * h] = dW2.ravel(); o += h * h
        grad[o : o + h] = db2; o += h
        grad[o : o + h * h] = dW3.ravel(); o += h * h
        grad[o : o + h] = db3; o += h
        grad[o : o + h * n_out] = dW4.ravel(); o += h * n_out
        grad[o : o + n_out] = db4; o += n_out
        if not het:
            rho = w[w.shape[0] - 1]
            grad[w.shape[0] - 1] = np.sum(dvar) * (1.0 / (1.0 + np.exp(-rho)))
            loss += 0.5 * rho * rho / prior_var / n_data
        # Gaussian prior over all parameters, scaled by dataset size.
        loss += 0.5 * np.sum(w[:mlp_size] * w[:mlp_size]) / prior_var / n_data
        grad += w / prior_var / n_data
        return loss, grad

    @dec
    def sghmc_chain(
        w0,
        X,
        y,
        h,
        n_out,
        het,
        noise_floor,
        prior_var,
        batch_idx,
        noise,
        n_burn,
        keep_every,
        n_keep,
        step_size,
        mdecay,
    ):
        """Run the scale-adapted SGHMC chain and return retained samples.

        ``batch_idx`` has shape (total_steps, m) and ``noise`` shape
        (total_steps, P); total_steps must equal n_burn + n_keep*keep_every.
        """
        n_data = X.shape[0]
        P = w0.shape[0]
        w = w0.copy()
        momentum = np.zeros(P)
        tau = np.ones(P)
        g_avg = np.zeros(P)
        v_hat = np.ones(P)
        samples = np.empty((n_keep, P))
        kept = 0
        total = n_burn + n_keep * keep_every
        eps2 = step_size * step_size
        # The gradient is of the dataset-size-normalized loss, so the
        # injected noise is scaled by 1/n to target the true posterior
        # rather than a temperature-n one.
        eps2_scaled = eps2 / n_data
        for t in range(total):
            idx = batch_idx[t]
            Xb = X[idx]
            yb = y[idx]
            _, grad = nll_and_grad(w, Xb, yb, h, n_out, het, noise_floor, prior_var, n_data)
            if t < n_burn:
                r = 1.0 / (tau + 1.0)
                g_avg = (1.0 - r) * g_avg + r * grad
                v_hat = (1.0 - r) * v_hat + r * grad * grad
                tau = tau * (1.0 - g_avg * g_avg / (v_hat + 1e-16)) + 1.0
            minv = 1.0 / (np.sqrt(v_hat) + 1e-16)
            noise_var = 2.0 * eps2_scaled * mdecay * minv - (eps2_scaled * minv) * (eps2_scaled * minv)
            sigma = np.sqrt(np.maximum(noise_var, 1e-16))
            momentum = momentum * (1.0 - mdecay) - eps2 * minv * grad + sigma * noise[t]
            w = w + momentum
            if t >= n_burn and (t - n_burn + 1) % keep_every == 0:
                samples[kept] = w
                kept += 1
        return samples

    @dec
    def ensemble_forward(W, X, h, n_out):
        """Raw MLP outputs for every weight sample: (N, q, n_out)."""
        N = W.shape[0]
        q, d = X.shape
        out = np.empty((N, q, n_out))
        for i in range(N):
            w = W[i]
            o = 0
            W1 = np.ascontiguousarray(w[o : o + d * h]).reshape(d, h); o += d * h
            b1 = w[o : o + h]; o += h
            W2 = np.ascontiguousarray(w[o : o + h * h]).reshape(h, h); o += h * h
            b2 = w[o : o + h]; o += h
            W3 = np.ascontiguousarray(w[o : o + h * h]).reshape(h, h); o += h * h
            b3 = w[o : o + h]; o += h
            W4 = np.ascontiguousarray(w[o : o + h * n_out]).reshape(h, n_out); o += h * n_out
            b4 = w[o : o + n_out]; o += n_out
            a1 = np.tanh(np.dot(X, W1) + b1)
            a2 = np.tanh(np.dot(a1, W2) + b2)
            a3 = np.tanh(np.dot(a2, W3) + b3)
            out[i] = np.dot(a3, W4) + b4
        return out

    return nll_and_grad, sghmc_chain, ensemble_forward
