"""Benchmark the jit kernel backend against the numpy reference.

Runs every hot kernel on its real shape from the 4-group, 16-channel
architecture, then the whole-model forward pass at each width. Reports
median wall time per call and the numpy/jit ratio, and checks that the
two backends produce identical bits on the standard stack.

    python3 benchmarks/compare_backends.py [--repeats 7] [--inner 20]
"""

import argparse
import time

import numpy as np

from gdnn import backend
from gdnn.model import GroupNetArch, build_model, forward
from gdnn.training import init_group


def timeit(fn, repeats, inner):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        times.append((time.perf_counter() - t0) / inner)
    return float(np.median(times)) * 1e3


def kernel_cases(rng):
    """(label, call(mod) -> result) for each kernel on standard shapes."""
    arch = GroupNetArch()
    cases = []
    shape = arch.input_shape
    for layer in arch.layers:
        spec = layer.spec
        if layer.op == "conv":
            c, h, w = spec.in_channels, shape[1], shape[2]
            x = rng.standard_normal((c, h, w)).astype(np.float32)
            wt = (rng.standard_normal(
                (spec.out_channels, c, spec.kernel, spec.kernel)) * 0.1).astype(np.float32)
            b = rng.standard_normal(spec.out_channels).astype(np.float32)
            cases.append((
                f"conv {layer.name} {c}x{h}x{w} k{spec.kernel}",
                lambda mod, x=x, wt=wt, b=b, s=spec: mod.conv2d_forward(x, wt, b, s.stride, s.pad),
            ))
            n = spec.out_size(h)
            shape = (spec.out_channels, n, n)
            if layer.name == "conv2":
                dy = rng.standard_normal(shape).astype(np.float32)
                cases.append((
                    f"conv {layer.name} backward",
                    lambda mod, x=x, wt=wt, dy=dy, s=spec: (
                        mod.conv2d_backward_input(wt, dy, s.stride, s.pad, x.shape[1], x.shape[2]),
                        mod.conv2d_backward_params(x, dy, s.kernel, s.stride, s.pad)),
                ))
        elif layer.op == "lrn":
            x = rng.standard_normal(shape).astype(np.float32)
            qf = np.float32(spec.alpha / spec.local_size)
            cases.append((
                f"lrn  {layer.name} {shape[0]}x{shape[1]}x{shape[2]}",
                lambda mod, x=x, s=spec, qf=qf: mod.lrn_forward(
                    x, s.local_size, qf, np.float32(s.beta), np.float32(s.k)),
            ))
        else:
            x = rng.standard_normal(shape).astype(np.float32)
            cases.append((
                f"pool {layer.name} {shape[0]}x{shape[1]}x{shape[2]}",
                lambda mod, x=x, s=spec: mod.maxpool_forward(x, s.kernel, s.stride),
            ))
            n = spec.out_size(shape[1])
            shape = (shape[0], n, n)
    x = rng.standard_normal(arch.fc_input_dim).astype(np.float32)
    wt = (rng.standard_normal((arch.num_classes, arch.fc_input_dim)) * 0.01).astype(np.float32)
    b = rng.standard_normal(arch.num_classes).astype(np.float32)
    cases.append((
        f"fc   {arch.num_classes}x{arch.fc_input_dim}",
        lambda mod, x=x, wt=wt, b=b: mod.fc_forward(x, wt, b),
    ))
    return cases


def flatten(result):
    if isinstance(result, tuple):
        out = []
        for part in result:
            out.extend(flatten(part))
        return out
    return [np.asarray(result)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--inner", type=int, default=20)
    args = ap.parse_args()

    names = backend.available_backends()
    if "numba" not in names:
        print("jit backend unavailable; nothing to compare")
        return
    rng = np.random.default_rng(42)
    cases = kernel_cases(rng)

    arch = GroupNetArch()
    model = build_model(arch, seed=42)
    for step in range(1, arch.num_groups + 1):
        init_group(model, step, attempt=1, seed=42)
    image = rng.standard_normal((3, 32, 32)).astype(np.float32)

    rows = []
    identical = True
    for label, call in cases:
        cells = {}
        outs = {}
        for name in ("numba", "numpy"):
            mod = backend.set_backend(name)
            call(mod)  # warm the jit cache before timing
            cells[name] = timeit(lambda: call(mod), args.repeats, args.inner)
            outs[name] = flatten(call(mod))
        if "backward" not in label:
            # forward kernels are order-pinned, so bits must match;
            # backward reductions are free to reassociate per backend
            for a, b in zip(outs["numba"], outs["numpy"]):
                if not np.array_equal(a, b):
                    identical = False
        rows.append((label, cells["numba"], cells["numpy"]))

    for k in range(1, arch.num_groups + 1):
        cells = {}
        outs = {}
        for name in ("numba", "numpy"):
            backend.set_backend(name)
            forward(model, image, k)
            cells[name] = timeit(lambda: forward(model, image, k),
                                 args.repeats, max(1, args.inner // 4))
            outs[name] = forward(model, image, k)[0]
        if not np.array_equal(outs["numba"], outs["numpy"]):
            identical = False
        rows.append((f"forward k={k}", cells["numba"], cells["numpy"]))

    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'jit ms':>9}  {'numpy ms':>9}  {'speedup':>8}")
    for label, jit_ms, np_ms in rows:
        print(f"{label:<{width}}  {jit_ms:>9.4f}  {np_ms:>9.4f}  {np_ms / jit_ms:>7.1f}x")
    print(f"forward outputs identical across backends: {'yes' if identical else 'NO'}")
    backend.set_backend(backend.default_backend_name())


if __name__ == "__main__":
    main()
