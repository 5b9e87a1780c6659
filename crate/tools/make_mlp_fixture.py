"""Train the tiny digits MLP and write it as QTSR tensors plus a manifest.

Usage: python3 tools/make_mlp_fixture.py [out_dir]

Inputs are the 8x8 scikit-learn digits scaled to 0..127. Weights are
quantized per tensor to int8; biases and divisors are integers/floats in
accumulator units so the Rust side runs the network in integer arithmetic.
"""

import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits
from sklearn.neural_network import MLPClassifier

ACT_MAX = 127
HIDDEN = 32
N_TEST = 400
N_CALIB = 128


def write_qtsr(path, values, signed):
    values = np.asarray(values)
    header = struct.pack("<4sBBBB", b"QTSR", 1, int(signed), 8, values.ndim)
    header += b"".join(struct.pack("<I", d) for d in values.shape)
    header += struct.pack("<d", 1.0)
    raw = values.astype(np.int8 if signed else np.uint8).tobytes(order="C")
    path.write_bytes(header + raw)


def quantize(w):
    scale = np.abs(w).max() / 127.0
    return np.clip(np.round(w / scale), -127, 127).astype(np.int64), scale


def round_half_away(v):
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "crates/core/fixtures/mlp"
    out.mkdir(parents=True, exist_ok=True)

    digits = load_digits()
    rng = np.random.default_rng(0)
    order = rng.permutation(len(digits.target))
    x = np.round(digits.data[order] * ACT_MAX / 16.0).astype(np.int64)
    y = digits.target[order]
    x_train, y_train = x[N_TEST:], y[N_TEST:]
    x_test, y_test = x[:N_TEST], y[:N_TEST]

    mlp = MLPClassifier(hidden_layer_sizes=(HIDDEN,), activation="relu", alpha=1e-3,
                        max_iter=600, random_state=0)
    mlp.fit(x_train / ACT_MAX, y_train)
    float_acc = mlp.score(x_test / ACT_MAX, y_test)

    # Layer 1: x_real = x_q / 127, W1 = s1 * W1q, so W1 x_real = s1/127 * (W1q x_q).
    w1q, s1 = quantize(mlp.coefs_[0].T)
    u1 = s1 / ACT_MAX
    b1 = np.round(mlp.intercepts_[0] / u1).astype(np.int64)
    calib = x_train[:N_CALIB]
    acc1 = calib @ w1q.T + b1
    d1 = max(1.0, acc1.max() / ACT_MAX)

    # Layer 2 sees h_q = round(acc1 / d1), so h_real = h_q * d1 * u1.
    w2q, s2 = quantize(mlp.coefs_[1].T)
    u2 = s2 * d1 * u1
    b2 = np.round(mlp.intercepts_[1] / u2).astype(np.int64)
    h = np.clip(round_half_away((calib @ w1q.T + b1) / d1), 0, ACT_MAX)
    d2 = max(1.0, np.abs(h @ w2q.T + b2).max() / ACT_MAX)

    def int_forward(xs):
        hq = np.clip(round_half_away((xs @ w1q.T + b1) / d1), 0, ACT_MAX)
        return hq @ w2q.T + b2

    int_acc = (int_forward(x_test).argmax(axis=1) == y_test).mean()

    write_qtsr(out / "w1.qtsr", w1q, True)
    write_qtsr(out / "w2.qtsr", w2q, True)
    write_qtsr(out / "inputs.qtsr", x_test, False)
    write_qtsr(out / "labels.qtsr", y_test, False)
    write_qtsr(out / "calibration.qtsr", calib, False)

    def ints(v):
        return "[" + ", ".join(str(int(i)) for i in v) + "]"

    manifest = f"""name = "digits_mlp"
inputs = "inputs.qtsr"
labels = "labels.qtsr"
calibration = "calibration.qtsr"

[[layers]]
name = "hidden"
weights = "w1.qtsr"
bias = {ints(b1)}
divisor = {float(d1)!r}
relu = true

[layers.kind]
type = "dense"
inputs = {x.shape[1]}
outputs = {HIDDEN}

[[layers]]
name = "out"
weights = "w2.qtsr"
bias = {ints(b2)}
divisor = {float(d2)!r}
relu = false

[layers.kind]
type = "dense"
inputs = {HIDDEN}
outputs = 10
"""
    (out / "mlp.toml").write_text(manifest)
    print(f"float accuracy {float_acc:.4f}, integer accuracy {int_acc:.4f}")


if __name__ == "__main__":
    main()
