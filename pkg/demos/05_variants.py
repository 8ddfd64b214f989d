"""
Large vocabulary and page-partitioned variants
==============================================
"""
from sgdp.cache_sim import simulate
from sgdp.model import TrainConfig
from sgdp.pipeline import accuracy, build_dataset, fit, make_prefetcher
from sgdp.synthetic import interleaved_readers
from sgdp.variants import PAGE_BLOCKS, make_sgdp_l_config, make_sgdp_p_config, partition_pages

base = TrainConfig(d=16, window=10, epochs=4, seed=0)

# readers near page edges, so some of them cross into the next page
acc = interleaved_readers(4000, bases=(PAGE_BLOCKS - 500, 3 * PAGE_BLOCKS - 800, 6 * PAGE_BLOCKS))
train_acc, test_acc = acc[:3000], acc[3000:]

lcfg = make_sgdp_l_config(base)
ds = build_dataset(train_acc, lcfg)
model, _ = fit(ds, lcfg)
held = build_dataset(test_acc, lcfg, vocab=ds.vocab)
print(f"large: asked k={lcfg.k}, {ds.vocab.k} deltas exist, accuracy {accuracy(model, held):.3f}")

pcfg = make_sgdp_p_config(base)
pages = partition_pages(train_acc)
print("pages touched:", sorted(pages), "accesses per page:", [len(v) for _, v in sorted(pages.items())])
ds_p = build_dataset(train_acc, pcfg)
print(f"page vocabulary: {ds_p.vocab.num_classes} classes, {len(ds_p.streams)} windows")
model_p, _ = fit(ds_p, pcfg)  # the 16384-way softmax makes this the slow one

for name, m, v in (("sgdp_l", model, ds.vocab), ("sgdp_p", model_p, ds_p.vocab)):
    r = simulate(test_acc, make_prefetcher(name, m, v, steps=3), 100)
    print(f"{name}: HR@100 {r.hr:.4f}  EPR@100 {r.epr:.4f}")
