"""Recurrent layers (vanilla/LSTM/GRU) with backpropagation through time.

Inputs are [T, F] or [B, T, F]; the initial hidden (and cell) state is
zero. With ``return_sequences`` the layer emits its full hidden sequence
(for stacking); otherwise the final hidden state (classifier head input).
The bidirectional wrapper runs a forward and a time-reversed pass with
independent parameters and concatenates along the feature axis.

Gate layouts: LSTM packs (input, forget, candidate, output) gates into
[., 4H] matrices; GRU packs (update, reset, candidate) into [., 3H] with
the classic reset-before-matmul candidate, so parameter counts are 4x and
3x the vanilla cell's in*h + h^2 + h.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError
from .layers import Layer, _promote, _sigmoid, glorot_uniform


class _Recurrent(Layer):
    def __init__(self, in_dim: int, units: int, return_sequences: bool = False):
        self.in_dim = in_dim
        self.units = units
        self.return_sequences = return_sequences

    def _promote_input(self, x):
        xb, squeezed = _promote(x, 2, f"{type(self).__name__} input")
        if xb.shape[2] != self.in_dim:
            raise ShapeMismatchError(
                f"{type(self).__name__} expects {self.in_dim} features, got {xb.shape[2]}"
            )
        return xb, squeezed

    def _emit(self, hs: np.ndarray, squeezed: bool) -> np.ndarray:
        y = hs if self.return_sequences else hs[:, -1]
        return y[0] if squeezed else y

    def _seq_grad(self, gy, B: int, T: int, squeezed: bool) -> np.ndarray:
        """Spread the upstream gradient over time steps."""
        g = np.asarray(gy, dtype=np.float64)
        if squeezed:
            g = g[None, ...]
        if self.return_sequences:
            return g
        gh = np.zeros((B, T, self.units), dtype=np.float64)
        gh[:, -1] = g
        return gh


class VanillaRNN(_Recurrent):
    """h_t = tanh(x_t Wx + h_{t-1} Wh + b)"""

    def __init__(self, in_dim, units, return_sequences=False, rng=None):
        super().__init__(in_dim, units, return_sequences)
        rng = rng or np.random.default_rng()
        self.Wx = glorot_uniform(rng, (in_dim, units), in_dim, units)
        self.Wh = glorot_uniform(rng, (units, units), units, units)
        self.b = np.zeros(units, dtype=np.float64)

    def params(self):
        return {"Wx": self.Wx, "Wh": self.Wh, "b": self.b}

    def forward(self, x, mode: str = "infer", rng=None):
        xb, squeezed = self._promote_input(x)
        B, T, _ = xb.shape
        hs = np.empty((B, T, self.units), dtype=np.float64)
        h = np.zeros((B, self.units), dtype=np.float64)
        for t in range(T):
            h = np.tanh(xb[:, t] @ self.Wx + h @ self.Wh + self.b)
            hs[:, t] = h
        cache = {"layer": self, "x": xb, "hs": hs, "squeezed": squeezed}
        return self._emit(hs, squeezed), cache

    def backward(self, cache, gy):
        self._check_cache(cache)
        xb, hs, squeezed = cache["x"], cache["hs"], cache["squeezed"]
        B, T, _ = xb.shape
        gh_seq = self._seq_grad(gy, B, T, squeezed)
        dWx = np.zeros_like(self.Wx)
        dWh = np.zeros_like(self.Wh)
        db = np.zeros_like(self.b)
        gx = np.empty_like(xb)
        carry = np.zeros((B, self.units), dtype=np.float64)
        for t in range(T - 1, -1, -1):
            dh = gh_seq[:, t] + carry
            da = dh * (1.0 - hs[:, t] ** 2)
            h_prev = hs[:, t - 1] if t > 0 else np.zeros((B, self.units))
            dWx += xb[:, t].T @ da
            dWh += h_prev.T @ da
            db += da.sum(axis=0)
            gx[:, t] = da @ self.Wx.T
            carry = da @ self.Wh.T
        return (gx[0] if squeezed else gx), {"Wx": dWx, "Wh": dWh, "b": db}


class LSTM(_Recurrent):
    def __init__(self, in_dim, units, return_sequences=False, rng=None):
        super().__init__(in_dim, units, return_sequences)
        rng = rng or np.random.default_rng()
        H = units
        self.Wx = glorot_uniform(rng, (in_dim, 4 * H), in_dim, 4 * H)
        self.Wh = glorot_uniform(rng, (H, 4 * H), H, 4 * H)
        self.b = np.zeros(4 * H, dtype=np.float64)

    def params(self):
        return {"Wx": self.Wx, "Wh": self.Wh, "b": self.b}

    def forward(self, x, mode: str = "infer", rng=None):
        xb, squeezed = self._promote_input(x)
        B, T, _ = xb.shape
        H = self.units
        hs = np.empty((B, T, H))
        cs = np.empty((B, T, H))
        gates = np.empty((B, T, 4 * H))
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        for t in range(T):
            z = xb[:, t] @ self.Wx + h @ self.Wh + self.b
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H : 2 * H])
            g = np.tanh(z[:, 2 * H : 3 * H])
            o = _sigmoid(z[:, 3 * H :])
            c = f * c + i * g
            h = o * np.tanh(c)
            hs[:, t] = h
            cs[:, t] = c
            gates[:, t, :H] = i
            gates[:, t, H : 2 * H] = f
            gates[:, t, 2 * H : 3 * H] = g
            gates[:, t, 3 * H :] = o
        cache = {"layer": self, "x": xb, "hs": hs, "cs": cs, "gates": gates, "squeezed": squeezed}
        return self._emit(hs, squeezed), cache

    def backward(self, cache, gy):
        self._check_cache(cache)
        xb, hs, cs, gates = cache["x"], cache["hs"], cache["cs"], cache["gates"]
        squeezed = cache["squeezed"]
        B, T, _ = xb.shape
        H = self.units
        gh_seq = self._seq_grad(gy, B, T, squeezed)
        dWx = np.zeros_like(self.Wx)
        dWh = np.zeros_like(self.Wh)
        db = np.zeros_like(self.b)
        gx = np.empty_like(xb)
        dh_carry = np.zeros((B, H))
        dc_carry = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            i = gates[:, t, :H]
            f = gates[:, t, H : 2 * H]
            g = gates[:, t, 2 * H : 3 * H]
            o = gates[:, t, 3 * H :]
            c_prev = cs[:, t - 1] if t > 0 else np.zeros((B, H))
            h_prev = hs[:, t - 1] if t > 0 else np.zeros((B, H))
            tc = np.tanh(cs[:, t])
            dh = gh_seq[:, t] + dh_carry
            do = dh * tc
            dc = dc_carry + dh * o * (1.0 - tc * tc)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_carry = dc * f
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dWx += xb[:, t].T @ dz
            dWh += h_prev.T @ dz
            db += dz.sum(axis=0)
            gx[:, t] = dz @ self.Wx.T
            dh_carry = dz @ self.Wh.T
        return (gx[0] if squeezed else gx), {"Wx": dWx, "Wh": dWh, "b": db}


class GRU(_Recurrent):
    def __init__(self, in_dim, units, return_sequences=False, rng=None):
        super().__init__(in_dim, units, return_sequences)
        rng = rng or np.random.default_rng()
        H = units
        self.Wx = glorot_uniform(rng, (in_dim, 3 * H), in_dim, 3 * H)
        self.Wh = glorot_uniform(rng, (H, 3 * H), H, 3 * H)
        self.b = np.zeros(3 * H, dtype=np.float64)

    def params(self):
        return {"Wx": self.Wx, "Wh": self.Wh, "b": self.b}

    def forward(self, x, mode: str = "infer", rng=None):
        xb, squeezed = self._promote_input(x)
        B, T, _ = xb.shape
        H = self.units
        hs = np.empty((B, T, H))
        zs = np.empty((B, T, H))
        rs = np.empty((B, T, H))
        hhs = np.empty((B, T, H))
        h = np.zeros((B, H))
        for t in range(T):
            px = xb[:, t] @ self.Wx + self.b
            ph = h @ self.Wh[:, : 2 * H]
            z = _sigmoid(px[:, :H] + ph[:, :H])
            r = _sigmoid(px[:, H : 2 * H] + ph[:, H:])
            hh = np.tanh(px[:, 2 * H :] + (r * h) @ self.Wh[:, 2 * H :])
            h = (1.0 - z) * h + z * hh
            hs[:, t] = h
            zs[:, t] = z
            rs[:, t] = r
            hhs[:, t] = hh
        cache = {
            "layer": self, "x": xb, "hs": hs, "zs": zs, "rs": rs, "hhs": hhs,
            "squeezed": squeezed,
        }
        return self._emit(hs, squeezed), cache

    def backward(self, cache, gy):
        self._check_cache(cache)
        xb, hs, zs, rs, hhs = cache["x"], cache["hs"], cache["zs"], cache["rs"], cache["hhs"]
        squeezed = cache["squeezed"]
        B, T, _ = xb.shape
        H = self.units
        gh_seq = self._seq_grad(gy, B, T, squeezed)
        dWx = np.zeros_like(self.Wx)
        dWh = np.zeros_like(self.Wh)
        db = np.zeros_like(self.b)
        gx = np.empty_like(xb)
        dh_carry = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            z, r, hh = zs[:, t], rs[:, t], hhs[:, t]
            h_prev = hs[:, t - 1] if t > 0 else np.zeros((B, H))
            dh = gh_seq[:, t] + dh_carry
            dz_gate = dh * (hh - h_prev)
            dhh = dh * z
            dh_prev = dh * (1.0 - z)
            dah = dhh * (1.0 - hh * hh)
            drh = dah @ self.Wh[:, 2 * H :].T
            dr = drh * h_prev
            dh_prev = dh_prev + drh * r
            daz = dz_gate * z * (1.0 - z)
            dar = dr * r * (1.0 - r)
            da = np.concatenate([daz, dar, dah], axis=1)
            dWx += xb[:, t].T @ da
            db += da.sum(axis=0)
            dWh[:, :H] += h_prev.T @ daz
            dWh[:, H : 2 * H] += h_prev.T @ dar
            dWh[:, 2 * H :] += (r * h_prev).T @ dah
            dh_prev = dh_prev + daz @ self.Wh[:, :H].T + dar @ self.Wh[:, H : 2 * H].T
            gx[:, t] = da @ self.Wx.T
            dh_carry = dh_prev
        return (gx[0] if squeezed else gx), {"Wx": dWx, "Wh": dWh, "b": db}


_CELL_CLASSES = {"vanilla": VanillaRNN, "lstm": LSTM, "gru": GRU}


def make_cell(kind: str, in_dim: int, units: int, return_sequences: bool, rng) -> _Recurrent:
    try:
        cls = _CELL_CLASSES[kind]
    except KeyError:
        raise ValueError(f"unknown recurrent cell kind {kind!r}") from None
    return cls(in_dim, units, return_sequences=return_sequences, rng=rng)


class Bidirectional(Layer):
    """Runs a forward and a reversed pass and concatenates their outputs.

    Output width is 2*units: per-step [fwd_t | bwd_t] with sequences, else
    the two final states side by side.
    """

    def __init__(self, cell_kind: str, in_dim: int, units: int, return_sequences=False, rng=None):
        rng = rng or np.random.default_rng()
        self.fwd = make_cell(cell_kind, in_dim, units, return_sequences, rng)
        self.bwd = make_cell(cell_kind, in_dim, units, return_sequences, rng)
        self.units = units
        self.return_sequences = return_sequences

    def params(self):
        out = {}
        for name, p in self.fwd.params().items():
            out[f"fwd_{name}"] = p
        for name, p in self.bwd.params().items():
            out[f"bwd_{name}"] = p
        return out

    def forward(self, x, mode: str = "infer", rng=None):
        xb, squeezed = _promote(x, 2, "Bidirectional input")
        yf, cf = self.fwd.forward(xb, mode, rng)
        yb, cb = self.bwd.forward(np.ascontiguousarray(xb[:, ::-1]), mode, rng)
        if self.return_sequences:
            yb = yb[:, ::-1]
        y = np.concatenate([yf, yb], axis=-1)
        cache = {"layer": self, "cf": cf, "cb": cb, "squeezed": squeezed}
        return (y[0] if squeezed else y), cache

    def backward(self, cache, gy):
        self._check_cache(cache)
        gyb = np.asarray(gy, dtype=np.float64)
        if cache["squeezed"]:
            gyb = gyb[None, ...]
        H = self.units
        gf = gyb[..., :H]
        gb = gyb[..., H:]
        if self.return_sequences:
            gb = np.ascontiguousarray(gb[:, ::-1])
        gxf, grads_f = self.fwd.backward(cache["cf"], gf)
        gxb_rev, grads_b = self.bwd.backward(cache["cb"], gb)
        gx = gxf + gxb_rev[:, ::-1]
        grads = {f"fwd_{k}": v for k, v in grads_f.items()}
        grads.update({f"bwd_{k}": v for k, v in grads_b.items()})
        return (gx[0] if cache["squeezed"] else gx), grads
