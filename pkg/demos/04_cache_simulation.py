"""
Hit ratio and prefetch precision under an LRU cache
===================================================
"""
from sgdp.cache_sim import simulate, sweep
from sgdp.model import TrainConfig
from sgdp.pipeline import build_dataset, fit, make_prefetcher
from sgdp.synthetic import interleaved_readers

acc = interleaved_readers(8000)
train_acc, test_acc = acc[:6000], acc[6000:]
config = TrainConfig(d=32, k=32, window=10, epochs=10, seed=0)
ds = build_dataset(train_acc, config)
model, _ = fit(ds, config)

sizes = [10, 100, 1000]
print(f"{'prefetcher':<8}" + "".join(f"  HR@{n:<5} EPR@{n:<5}" for n in sizes))
for name in ("none", "naive", "stride", "sgdp"):
    reps = sweep(test_acc, make_prefetcher(name, model, ds.vocab), sizes)
    print(f"{name:<8}" + "".join(f"  {r.hr:.4f}   {r.epr:.4f}   " for r in reps))

# feeding predictions back in: more blocks per access, slightly lower precision
print("\nrolling prefetch at N=100")
for steps in (1, 2, 5, 10):
    r = simulate(test_acc, make_prefetcher("sgdp", model, ds.vocab, steps), 100)
    print(f"  steps {steps:>2}: HR {r.hr:.4f}  EPR {r.epr:.4f}  issued {r.prefetch_issued}")
