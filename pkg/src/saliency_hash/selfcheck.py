"""Built-in verification suites.

``gradient_suite`` compares reverse-mode gradients of every differentiable op
(and a full ASH-U pairwise loss) with central finite differences in double
precision. ``analytic_suite`` runs the hand-computable unit cases.
"""
from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import functional as F
from .attention import spatial_attention
from .checkpoint import load_checkpoint, save_checkpoint
from .data import SyntheticSpec, gen_synthetic, load_dataset, write_manifest, write_netpbm, ManifestEntry
from .errors import BadMagicError, ContractError, DataError, ShapeError, ShapeMismatchError
from .gradcheck import EXTENDED, CheckResult, check_params, finite_diff_check
from .index import CodeSet, build_index, hamming_distance, query_topk
from .layers import BatchNorm2d, Conv2d, Dense, ResidualBlock, he_init
from .metrics import ap_at_k, evaluate, hr_at_k, rr_at_k
from .model import AshConfig, HashCode, binarize, build_model, encode_batch
from .attention import SpatialAttention
from .tensor import Tensor, make_rng, matmul, randn_seeded
from .training import SGD, LossConfig, PairSampler, TrainPlan, pairwise_loss, sample_pairs, train

GRAD_TOL = 1e-4
F64 = np.float64


@dataclass
class CaseResult:
    name: str
    passed: bool
    detail: str = ""


# -- gradient suite -------------------------------------------------------------

POINTS_PER_OP = 20


def _leaf(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _probe(shape, rng) -> Tensor:
    return Tensor(rng.standard_normal(shape))


def _check(fn, params, **kw) -> CheckResult:
    return check_params(fn, params, oracle_dtype=EXTENDED, **kw)


def _grad_cases() -> dict[str, tuple[Callable[[int], CheckResult], int]]:
    """name -> (check at the random point keyed by a seed, number of points)."""
    cases = {}

    def case(points=POINTS_PER_OP):
        def register(fn):
            cases[fn.__name__.removeprefix("grad_")] = (fn, points)
            return fn
        return register

    @case()
    def grad_elementwise(seed):
        rng = make_rng((10, seed))
        a, b = _leaf(rng, 2, 3, 4, 4), _leaf(rng, 2, 1, 4, 4)
        p = _probe((2, 3, 4, 4), rng)
        return _check(lambda: ((a * b + a - b) * p).sum(), {"a": a, "b": b})

    @case()
    def grad_matmul(seed):
        rng = make_rng((11, seed))
        a, b = _leaf(rng, 4, 5), _leaf(rng, 5, 3)
        p = _probe((4, 3), rng)
        return _check(lambda: (matmul(a, b) * p).sum(), {"a": a, "b": b})

    @case()
    def grad_conv2d(seed):
        rng = make_rng((12, seed))
        x, w, b = _leaf(rng, 2, 3, 8, 8), _leaf(rng, 4, 3, 3, 3), _leaf(rng, 4)
        stride, pad = ((1, 1), (2, 1), (1, 0))[seed % 3]
        ho = (8 + 2 * pad - 3) // stride + 1
        p = _probe((2, 4, ho, ho), rng)
        return _check(lambda: (F.conv2d(x, w, b, stride, pad) * p).sum(),
                      {"x": x, "w": w, "b": b}, max_coords=40, seed=seed)

    @case()
    def grad_max_pool(seed):
        rng = make_rng((13, seed))
        x = _leaf(rng, 2, 3, 8, 8)
        p = _probe((2, 3, 4, 4), rng)
        return _check(lambda: (F.max_pool2d(x) * p).sum(), {"x": x})

    @case()
    def grad_avg_pool(seed):
        rng = make_rng((14, seed))
        x = _leaf(rng, 2, 3, 8, 8)
        p = _probe((2, 3, 4, 4), rng)
        return _check(lambda: (F.avg_pool2d(x) * p).sum(), {"x": x})

    @case()
    def grad_channel_reduce(seed):
        rng = make_rng((15, seed))
        x = _leaf(rng, 2, 3, 4, 4)
        kind = ("max", "mean")[seed % 2]
        p = _probe((2, 1, 4, 4), rng)
        return _check(lambda: (F.channel_reduce(kind, x) * p).sum(), {"x": x})

    @case()
    def grad_activations(seed):
        rng = make_rng((16, seed))
        x = _leaf(rng, 3, 5)
        p = _probe((3, 5), rng)
        return _check(lambda: (x.relu() * p).sum(), {"x": x}).merge(
            _check(lambda: (x.sigmoid() * p).sum(), {"x": x}))

    @case()
    def grad_batch_norm(seed):
        rng = make_rng((17, seed))
        bn = BatchNorm2d(3, dtype=F64)
        bn.gamma.data[:] = rng.standard_normal(3)
        bn.beta.data[:] = rng.standard_normal(3)
        bn.running_mean[:] = rng.standard_normal(3)
        bn.running_var[:] = rng.random(3) + 0.5
        training = seed % 2 == 0
        x = _leaf(rng, 2, 3, 4, 4)
        p = _probe((2, 3, 4, 4), rng)
        return _check(lambda: (bn(x, training) * p).sum(), {"x": x, "gamma": bn.gamma, "beta": bn.beta})

    @case()
    def grad_dense(seed):
        rng = make_rng((18, seed))
        layer = he_init(Dense(6, 4, dtype=F64), seed)
        layer.bias.data[:] = rng.standard_normal(4)
        x = _leaf(rng, 3, 6)
        p = _probe((3, 4), rng)
        return _check(lambda: (layer(x) * p).sum(), {"x": x, **dict(layer.named_parameters())})

    @case()
    def grad_residual_block(seed):
        rng = make_rng((19, seed))
        out_ch, stride = ((4, 1), (6, 2))[seed % 2]
        block = he_init(ResidualBlock(4, out_ch, stride, dtype=F64), seed)
        x = _leaf(rng, 1, 4, 6, 6)
        size = (6 + 2 - 3) // stride + 1
        p = _probe((1, out_ch, size, size), rng)
        return _check(lambda: (block(x, True) * p).sum(), {"x": x, **dict(block.named_parameters())},
                      max_coords=24, seed=seed)

    @case()
    def grad_spatial_attention(seed):
        rng = make_rng((20, seed))
        x = _leaf(rng, 2, 3, 4, 4)
        p = _probe((2, 3, 4, 4), rng)
        return _check(lambda: (spatial_attention(x) * p).sum(), {"x": x})

    @case()
    def grad_pairwise_loss(seed):
        rng = make_rng((21, seed))
        h1, h2 = _leaf(rng, 6, 4, scale=0.5), _leaf(rng, 6, 4, scale=0.5)
        y = rng.integers(0, 2, size=6)
        cfg = LossConfig(r=1.0, k=4, distance=("squared_l2", "l2")[seed % 2])
        return _check(lambda: pairwise_loss(h1, h2, y, cfg), {"h1": h1, "h2": h2})

    def model_case(arch: str, seed: int, max_coords: int) -> CheckResult:
        rng = make_rng((22, seed))
        model = build_model(AshConfig(arch=arch, k=4, input_shape=(3, 8, 8), seed=seed), dtype=F64)
        x1, x2 = _leaf(rng, 1, 3, 8, 8), _leaf(rng, 1, 3, 8, 8)
        y = np.array([seed % 2])
        loss_cfg = LossConfig(r=0.5, k=4)
        fn = lambda: pairwise_loss(model(x1, True), model(x2, True), y, loss_cfg)
        return _check(fn, {"x1": x1, "x2": x2, **model.params}, max_coords=max_coords, seed=seed)

    @case(points=2)
    def grad_ash_u_pairwise(seed):
        return model_case("U", seed, 40)

    @case(points=2)
    def grad_ash_l_pairwise(seed):
        return model_case("L", seed, 8)

    return cases


def gradient_suite(names=None, points: int | None = None) -> list[CaseResult]:
    """One result per op: the worst relative error over its random points."""
    results = []
    for name, (fn, n_points) in _grad_cases().items():
        if names and name not in names:
            continue
        total = CheckResult()
        for seed in range(points or n_points):
            total.merge(fn(seed))
        results.append(CaseResult(
            name, total.max_rel_error < GRAD_TOL,
            f"max relative error {total.max_rel_error:.3e} over {total.checked} coordinates"
            f" ({len(total.skipped)} at kinks)"))
    return results


# -- analytic suite -------------------------------------------------------------

def _raises(exc, fn) -> bool:
    try:
        fn()
    except exc:
        return True
    return False


def _close(a, b, tol=1e-6) -> bool:
    return np.allclose(np.asarray(a, dtype=F64), np.asarray(b, dtype=F64), atol=tol, rtol=0)


def _tiny_run(tmp: Path, tag: str) -> tuple[list[float], bytes]:
    rng = make_rng(5)
    images = rng.random((24, 3, 8, 8)).astype(np.float32)
    labels = np.repeat([0, 1, 2], 8)
    model = build_model(AshConfig(k=4, input_shape=(3, 8, 8), hidden=32, seed=5))
    hist = train(model, images, labels, TrainPlan(epochs=2, batch_size=4, seed=5), LossConfig(k=4)).history
    path = tmp / f"{tag}.ckpt"
    save_checkpoint(model, path)
    return hist, path.read_bytes()


def analytic_cases() -> dict[str, Callable[[], bool]]:
    T = lambda v: Tensor(np.asarray(v, dtype=F64))
    sig1 = 1 / (1 + math.exp(-1))

    def conv_delta_identity():
        x = np.random.default_rng(0).standard_normal((1, 2, 5, 5))
        w = np.zeros((2, 2, 3, 3))
        w[0, 0, 1, 1] = w[1, 1, 1, 1] = 1
        return _close(F.conv2d(T(x), T(w), None, 1, 1).data, x)

    def grad_of(fn, x0):
        x = Tensor(np.asarray(x0, dtype=F64), requires_grad=True)
        fn(x).backward()
        return x.grad

    def bn_hand(gamma, beta):
        bn = BatchNorm2d(1, dtype=F64)
        bn.gamma.data[:] = gamma
        bn.beta.data[:] = beta
        return bn(T(np.array([1.0, 3.0]).reshape(2, 1, 1, 1)), True).data.ravel()

    def bn_eval():
        bn = BatchNorm2d(2, dtype=F64)
        bn.gamma.data[:] = [2.0, 0.5]
        bn.beta.data[:] = [1.0, -1.0]
        x = np.random.default_rng(1).standard_normal((2, 2, 3, 3))
        expect = x / math.sqrt(1 + 1e-5) * np.array([2.0, 0.5]).reshape(1, 2, 1, 1) \
            + np.array([1.0, -1.0]).reshape(1, 2, 1, 1)
        return _close(bn(T(x), False).data, expect, 1e-12)

    def bn_standardized():
        x = np.random.default_rng(2).standard_normal((8, 3, 4, 4))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
        bn = he_init(BatchNorm2d(3, dtype=F64), 0)
        return _close(bn(T(x), True).data, x, 1e-4)

    def conv_bias_only():
        conv = Conv2d(2, 3, dtype=F64)
        conv.bias.data[:] = [1.5, -2.0, 0.25]
        out = conv(T(np.random.default_rng(3).random((1, 2, 4, 4)))).data
        return _close(out, np.broadcast_to(np.array([1.5, -2.0, 0.25]).reshape(1, 3, 1, 1), out.shape))

    def residual_zero_branch():
        block = ResidualBlock(3, 3, 1, dtype=F64)
        x = np.random.default_rng(4).standard_normal((2, 3, 5, 5))
        return np.array_equal(block(T(x), True).data, np.maximum(x, 0))

    def residual_shape():
        block = ResidualBlock(16, 32, 2)
        return block(Tensor(np.zeros((2, 16, 32, 32), np.float32)), False).shape == (2, 32, 16, 16)

    def dense_identity():
        d = Dense(3, 3, dtype=F64)
        d.weight.data[:] = np.eye(3)
        x = np.random.default_rng(5).standard_normal((4, 3))
        return _close(d(T(x)).data, x, 0)

    def dense_zero_input():
        d = Dense(3, 2, dtype=F64)
        he_init(d, 1)
        d.bias.data[:] = [0.5, -1.0]
        return _close(d(T(np.zeros((4, 3)))).data, np.tile([0.5, -1.0], (4, 1)), 0)

    def model_u_length():
        m = build_model(AshConfig("U", 12, (3, 32, 32), (16, 32), seed=0))
        return encode_batch(m, np.zeros((2, 3, 32, 32), np.float32)).shape == (2, 12)

    def model_l_structure():
        m = build_model(AshConfig("L", 12, (3, 32, 32), seed=0))
        kinds = [type(layer) for _, layer in m.layers]
        return kinds.count(ResidualBlock) == 3 and kinds.count(SpatialAttention) == 1

    def encode_range_and_determinism():
        m = build_model(AshConfig(k=6, input_shape=(3, 16, 16), seed=1))
        x = make_rng(9).random((5, 3, 16, 16)).astype(np.float32)
        a, b = encode_batch(m, x), encode_batch(m, x)
        return a.shape == (5, 6) and bool(((a > 0) & (a < 1)).all()) and np.array_equal(a, b)

    def checkpoint_cases():
        with tempfile.TemporaryDirectory() as tmp:
            cfg = AshConfig(k=12, input_shape=(3, 8, 8), hidden=16, seed=2)
            model = build_model(cfg)
            model.buffers["bn1.running_mean"][:] = np.arange(16)
            path = Path(tmp) / "m.ckpt"
            save_checkpoint(model, path)
            loaded = load_checkpoint(path, cfg)
            same = all(np.array_equal(v, loaded.state()[k]) for k, v in model.state().items())
            x = make_rng(1).random((2, 3, 8, 8)).astype(np.float32)
            same_out = np.array_equal(encode_batch(model, x), encode_batch(loaded, x))
            raw = bytearray(path.read_bytes())
            raw[:4] = b"XXXX"
            bad = Path(tmp) / "bad.ckpt"
            bad.write_bytes(bytes(raw))
            magic = _raises(BadMagicError, lambda: load_checkpoint(bad, cfg))
            other = AshConfig(k=24, input_shape=(3, 8, 8), hidden=16)
            mismatch = _raises(ShapeMismatchError, lambda: load_checkpoint(path, other))
            return same and same_out and magic and mismatch

    def sgd_hand():
        w = Tensor(np.array([1.0]), requires_grad=True)
        opt = SGD({"w.weight": w}, lr=0.1, momentum=0.9, weight_decay=0.001)
        opt.step({"w.weight": np.array([0.1])})
        return _close(opt.velocity["w.weight"], [0.101], 1e-12) and _close(w.data, [0.9899], 1e-12)

    def sgd_still():
        w = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        opt = SGD({"w.weight": w}, lr=0.1, momentum=0.9, weight_decay=0.0)
        opt.step({"w.weight": np.zeros(2)})
        return np.array_equal(w.data, [1.0, -2.0])

    def pair_cases():
        labels = np.repeat(np.arange(5), 20)
        left, right, y = sample_pairs(labels, 100, 0.5, seed=3)
        again = sample_pairs(labels, 100, 0.5, seed=3)
        return ((y == 0).sum() == 50
                and np.array_equal((labels[left] != labels[right]).astype(int), y)
                and bool((left != right).all())
                and all(np.array_equal(a, b) for a, b in zip((left, right, y), again)))

    def iterations_per_epoch():
        return TrainPlan(batch_size=10).steps_per_epoch(1000) == 100

    def training_determinism():
        with tempfile.TemporaryDirectory() as tmp:
            h1, c1 = _tiny_run(Path(tmp), "a")
            h2, c2 = _tiny_run(Path(tmp), "b")
            return h1 == h2 and c1 == c2

    def loss_case(y, h1, h2, k=12, r=0.5):
        cfg = LossConfig(r=r, k=k)
        return pairwise_loss(T([h1]), T([h2]), np.array([y]), cfg).item()

    def d_vec(d, k=12):
        return np.sqrt(np.full(k, d / k))

    def index_cases():
        rng = make_rng(4)
        emb = rng.random((3, 8)).astype(np.float32)
        codes = CodeSet.from_embeddings([10, 11, 12], [0, 1, 0], emb, binarize(emb))
        idx = build_index(codes, "hamming")
        top = query_topk(idx, codes.record(1).code, 1)
        many = query_topk(idx, codes.record(0).code, 10)
        dup = CodeSet.from_embeddings([1, 1], [0, 0], emb[:2], binarize(emb[:2]))
        return (len(idx) == 3 and top == [(11, 0)] and len(many) == 3
                and _raises(ContractError, lambda: build_index(dup))
                and _raises(ContractError, lambda: build_index([])))

    def eval_full_class():
        emb = make_rng(6).random((12, 4)).astype(np.float32)
        gallery = CodeSet.from_embeddings(range(12), [3] * 12, emb, binarize(emb))
        query = CodeSet.from_embeddings([100], [3], emb[:1] + 0.01, binarize(emb[:1]))
        rep = evaluate(build_index(gallery, "l2"), query, 10)
        return rep.mHR == rep.mAP == rep.mRR == 1.0

    def eval_bookkeeping():
        emb = make_rng(7).random((30, 4)).astype(np.float32)
        labels = np.repeat([0, 1, 2], 10)
        gallery = CodeSet.from_embeddings(range(30), labels, emb, binarize(emb))
        query = CodeSet.from_embeddings(range(100, 106), [0, 0, 1, 2, 2, 2], emb[:6], binarize(emb[:6]))
        rep = evaluate(build_index(gallery, "l2"), query, 10)
        return rep.k == 10 and rep.class_counts == {0: 2, 1: 1, 2: 3}

    def synthetic_counts_and_determinism():
        with tempfile.TemporaryDirectory() as tmp:
            spec = SyntheticSpec(classes=4, per_class=250, seed=7)
            m1 = gen_synthetic(spec, Path(tmp) / "a")
            m2 = gen_synthetic(spec, Path(tmp) / "b")
            ds = load_dataset(m1)
            counts = np.bincount(ds.labels)
            files_a = sorted((Path(tmp) / "a").rglob("*.*"))
            same = all(f.read_bytes() == (Path(tmp) / "b" / f.relative_to(Path(tmp) / "a")).read_bytes()
                       for f in files_a)
            return len(ds) == 1000 and counts.tolist() == [250] * 4 and same and m2.exists()

    def manifest_cases():
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            px = np.zeros((1, 2, 2))
            px[0, 0, 0] = 1.0
            write_netpbm(tmp / "a.pgm", px)
            write_netpbm(tmp / "b.pgm", px)
            write_manifest(tmp / "m.csv", [ManifestEntry("a.pgm", "cat"), ManifestEntry("b.pgm", "ant")])
            ds = load_dataset(tmp / "m.csv")
            write_manifest(tmp / "bad.csv", [ManifestEntry("missing.pgm", "x")])
            try:
                load_dataset(tmp / "bad.csv")
                named = False
            except DataError as exc:
                named = "missing.pgm" in str(exc)
            return (len(ds) == 2 and ds.labels.tolist() == [1, 0] and named
                    and ds.images[0, 0, 0, 0] == 1.0 and ds.images[0, 0, 1, 1] == 0.0)

    cases = {
        "randn_deterministic": lambda: np.array_equal(randn_seeded([2, 2], 7).data, randn_seeded([2, 2], 7).data),
        "randn_zero_dim_error": lambda: _raises(ShapeError, lambda: randn_seeded([0], 1)),
        "mul_vectors": lambda: _close((T([1, -2, 3]) * T([2, 2, 2])).data, [2, -4, 6], 0),
        "add_zeros_identity": lambda: _close((T(np.arange(6.0)) + T(np.zeros(6))).data, np.arange(6.0), 0),
        "mul_gate_broadcast": lambda: (T(np.ones((2, 1, 3, 3))) * T(np.ones((2, 4, 3, 3)))).shape == (2, 4, 3, 3),
        "matmul_identity": lambda: _close(matmul(T(np.eye(3)), T(np.arange(9.0).reshape(3, 3))).data,
                                          np.arange(9.0).reshape(3, 3), 0),
        "matmul_hand": lambda: _close(matmul(T([[1, 2], [3, 4]]), T([[1], [1]])).data, [[3], [7]], 0),
        "matmul_mismatch_error": lambda: _raises(ShapeError, lambda: matmul(T(np.ones((2, 3))), T(np.ones((2, 3))))),
        "conv_ones": lambda: _close(F.conv2d(T(np.ones((1, 1, 3, 3))), T(np.ones((1, 1, 3, 3))), T([0.0]), 1, 1).data,
                                    [[[[4, 6, 4], [6, 9, 6], [4, 6, 4]]]], 0),
        "conv_delta_identity": conv_delta_identity,
        "maxpool_hand": lambda: _close(F.max_pool2d(T(np.arange(1.0, 17).reshape(1, 1, 4, 4))).data,
                                       [[[[6, 8], [14, 16]]]], 0),
        "avgpool_hand": lambda: _close(F.avg_pool2d(T([[[[1.0, 2], [3, 4]]]]), 2, 2, 0).data, [[[[2.5]]]], 0),
        "maxpool_constant": lambda: _close(F.max_pool2d(T(np.full((1, 2, 5, 5), 3.5))).data, 3.5, 0),
        "channel_reduce_pair": lambda: (_close(F.channel_reduce("max", T(np.array([2.0, -2.0]).reshape(1, 2, 1, 1))).data, 2, 0)
                                        and _close(F.channel_reduce("mean", T(np.array([2.0, -2.0]).reshape(1, 2, 1, 1))).data, 0, 0)),
        "channel_reduce_single": lambda: all(
            _close(F.channel_reduce(k, T(np.arange(9.0).reshape(1, 1, 3, 3))).data, np.arange(9.0).reshape(1, 1, 3, 3), 0)
            for k in ("max", "mean")),
        "channel_reduce_constant": lambda: all(
            _close(F.channel_reduce(k, T(np.full((2, 3, 2, 2), -1.25))).data, -1.25, 0) for k in ("max", "mean")),
        "relu_hand": lambda: _close(T([-1, 0, 2]).relu().data, [0, 0, 2], 0),
        "sigmoid_zero": lambda: _close(T([0.0]).sigmoid().data, [0.5], 0),
        "sigmoid_one": lambda: _close(T([1.0]).sigmoid().data, [0.731059], 1e-6),
        "backward_sum": lambda: _close(grad_of(lambda x: x.sum(), [1.0, 2.0, 3.0]), [1, 1, 1], 0),
        "backward_square": lambda: _close(grad_of(lambda x: (x * x).sum(), [1.0, -2.0]), [2, -4], 0),
        "backward_nonscalar_error": lambda: _raises(ContractError, lambda: (Tensor(np.ones(2), requires_grad=True) * 2).backward()),
        "fd_linear": lambda: finite_diff_check(lambda x: (x * Tensor(np.array([3.0, -1.0, 2.0]))).sum(),
                                               T([0.3, 0.1, -0.4])) < 1e-10,
        "fd_relu_kink_excluded": lambda: finite_diff_check(lambda x: x.relu().sum(), T([0.0, 1.0, -2.0])) < 1e-10,
        "he_init_deterministic": lambda: np.array_equal(he_init(Conv2d(3, 4), 9).weight.data, he_init(Conv2d(3, 4), 9).weight.data),
        "batchnorm_standardized_identity": bn_standardized,
        "conv_zero_weights_bias": conv_bias_only,
        "batchnorm_hand": lambda: _close(bn_hand(1.0, 0.0), [-0.999995, 0.999995], 1e-6),
        "batchnorm_affine_hand": lambda: _close(bn_hand(2.0, 1.0), [-0.99999, 2.99999], 1e-6),
        "batchnorm_eval": bn_eval,
        "dense_identity": dense_identity,
        "dense_zero_input": dense_zero_input,
        "residual_zero_branch": residual_zero_branch,
        "residual_stride_shape": residual_shape,
        "attention_zero": lambda: _close(spatial_attention(T(np.zeros((1, 3, 2, 2)))).data, 0, 0),
        "attention_ones": lambda: _close(spatial_attention(T(np.ones((1, 3, 2, 2)))).data, sig1, 1e-12),
        "attention_pair": lambda: _close(spatial_attention(T(np.array([2.0, -2.0]).reshape(1, 2, 1, 1))).data.ravel(),
                                         [1, -1], 1e-12),
        "model_u_code_length": model_u_length,
        "model_l_structure": model_l_structure,
        "encode_shape_range_determinism": encode_range_and_determinism,
        "binarize_tie_rule": lambda: binarize(np.array([0.9, 0.2, 0.5]), 0.5).tolist() == [1, 0, 0],
        "binarize_zero": lambda: HashCode.from_bits(binarize(np.zeros(12), 0.5)).popcount() == 0,
        "checkpoint_roundtrip_and_errors": checkpoint_cases,
        "loss_similar_equal": lambda: loss_case(0, np.full(12, 0.3), np.full(12, 0.3)) == 0.0,
        "loss_beyond_margin": lambda: loss_case(1, np.zeros(12), np.ones(12)) == 0.0,
        "loss_inside_margin": lambda: _close(loss_case(1, np.zeros(12), d_vec(2.0)), 2.0, 1e-12),
        "loss_similar_distance": lambda: _close(loss_case(0, np.zeros(12), d_vec(6.0)), 3.0, 1e-12),
        "pair_sampling": pair_cases,
        "sgd_hand": sgd_hand,
        "sgd_no_gradient": sgd_still,
        "iterations_per_epoch": iterations_per_epoch,
        "training_determinism": training_determinism,
        "hamming_zero": lambda: hamming_distance([0, 0, 0], [0, 0, 0]) == 0,
        "hamming_hand": lambda: hamming_distance([1, 0, 1, 0], [0, 1, 1, 0]) == 2,
        "hamming_complement": lambda: hamming_distance(np.arange(12) % 2, 1 - np.arange(12) % 2) == 12,
        "index_build_and_query": index_cases,
        "hr_cases": lambda: (hr_at_k([1, 1, 0, 0, 0], 5) == 0.4 and hr_at_k([0] * 5, 5) == 0
                             and hr_at_k([1] * 5, 5) == 1),
        "ap_cases": lambda: (ap_at_k([1, 1, 0, 0, 0], 5) == 1.0 and _close(ap_at_k([1, 0, 1, 0, 0], 5), 0.833333, 1e-6)
                             and ap_at_k([0] * 5, 5) == 0),
        "rr_cases": lambda: (rr_at_k([1, 0, 0], 3) == 1.0 and rr_at_k([0, 1, 0], 3) == 0.5
                             and rr_at_k([0, 0, 0], 3) == 0),
        "evaluate_full_class": eval_full_class,
        "evaluate_bookkeeping": eval_bookkeeping,
        "synthetic_counts_determinism": synthetic_counts_and_determinism,
        "manifest_loading": manifest_cases,
    }
    return cases


def analytic_suite(names=None) -> list[CaseResult]:
    results = []
    for name, fn in analytic_cases().items():
        if names and name not in names:
            continue
        try:
            ok = bool(fn())
            results.append(CaseResult(name, ok))
        except Exception as exc:  # a crashing case is a failing case
            results.append(CaseResult(name, False, f"{type(exc).__name__}: {exc}"))
    return results
