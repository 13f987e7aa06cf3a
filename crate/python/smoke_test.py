#!/usr/bin/env python3
"""End-to-end smoke test of the genesig_py extension module.

Build the module first, then run this script from anywhere:

    cargo build -p genesig-py --release
    python3 python/smoke_test.py

It drives the full flow on a small synthetic cohort: generate, normalize,
balance, train, attribute, distill a signature, evaluate it, and exercise
the statistics helpers. Prints OK on success.
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_genesig_py():
    candidates = [
        REPO / "target" / "release" / "libgenesig_py.so",
        REPO / "target" / "debug" / "libgenesig_py.so",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("libgenesig_py.so not found; run: cargo build -p genesig-py --release")
    stage = Path(tempfile.mkdtemp(prefix="genesig_py_"))
    shutil.copy2(built, stage / "genesig_py.so")
    sys.path.insert(0, str(stage))
    import genesig_py

    return genesig_py


def main():
    gs = import_genesig_py()
    print(f"genesig_py {gs.__version__}")

    spec = {
        "class_sizes": [12, 12, 12],
        "n_genes": 30,
        "planted": [
            {"class": 0, "gene_indices": [0, 1, 2], "effect_size": 3.0},
            {"class": 1, "gene_indices": [3, 4, 5], "effect_size": 3.0},
            {"class": 2, "gene_indices": [6, 7, 8], "effect_size": 3.0},
        ],
        "noise_std": 1.0,
        "correlation_blocks": [],
        "seed": 13,
    }
    x, y, truth_json = gs.generate_synthetic(json.dumps(spec))
    truth = json.loads(truth_json)
    assert x.n_samples == 36 and x.n_genes == 30
    assert y.counts() == [12, 12, 12]
    assert sum(len(v) for v in truth["per_class"].values()) == 9
    print(f"cohort: {x!r}, {y!r}")

    xz, means, stds = gs.zscore(x)
    assert len(means) == 30 and len(stds) == 30
    col = [xz.row(s)[0] for s in range(xz.n_samples)]
    assert abs(sum(col)) < 1e-9, "z-scored gene should have zero mean"

    xb, yb = gs.smote_balance(xz, y, k_neighbors=3, seed=1)
    assert yb.counts() == [12, 12, 12], "balanced classes stay balanced"

    folds = gs.stratified_kfold(y, 3, seed=0)
    assert len(folds) == 3
    train_idx, test_idx = folds[0]
    assert sorted(train_idx + test_idx) == list(range(36))

    model_config = {
        "hidden": [12],
        "dropout": 0.1,
        "smote_k": 3,
        "autoencoder": {"encoder_dims": [12], "epochs": 4},
        "training": {"epochs": 120, "batch_size": 12, "learning_rate": 3e-3},
    }
    net, report_json = gs.train_model(xz, y, json.dumps(model_config), smote_seed=5)
    report = json.loads(report_json)
    assert len(report["classifier"]["loss_curve"]) == 120
    assert report["classifier"]["final_train_accuracy"] > 0.9
    print(f"model: {net!r}, train accuracy {report['classifier']['final_train_accuracy']:.3f}")

    predictions = net.predict(xz)
    train_acc = sum(p == t for p, t in zip(predictions, y.labels)) / len(predictions)
    assert train_acc > 0.9

    grad = gs.attribute(net, xz.row(0), y.labels[0])
    ig = gs.attribute(net, xz.row(0), y.labels[0], json.dumps({"method": "integrated_gradients", "steps": 50}))
    assert len(grad) == 30 and len(ig) == 30

    sig_config = {
        "top_k_per_patient": 15,
        "per_class_top": 3,
        "methods": [{"method": "gradient"}],
    }
    sig = json.loads(gs.build_signature(net, xz, y, json.dumps(sig_config)))
    planted = {g for genes in truth["per_class"].values() for g in genes}
    recovered = planted.intersection(sig["genes"])
    assert len(recovered) >= 6, f"recovered only {sorted(recovered)}"
    print(f"signature: {len(sig['genes'])} genes, {len(recovered)}/9 planted recovered")

    eval_config = {
        "k_folds": 3,
        "hidden": [10],
        "dropout": 0.1,
        "smote_k": 3,
        "training": {"epochs": 300, "batch_size": 12, "learning_rate": 3e-3},
    }
    metrics = json.loads(gs.evaluate_signature(x, y, sig["genes"], json.dumps(eval_config)))
    assert len(metrics["fold_accuracies"]) == 3
    assert metrics["accuracy_mean"] > 0.7, metrics["fold_accuracies"]
    print(f"evaluation: mean accuracy {metrics['accuracy_mean']:.3f}")

    u, z, p = gs.rank_sum_test([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [7.0, 8.0, 9.0, 10.0, 11.0, 12.0])
    assert u == 0.0 and p < 0.01
    exact = gs.exact_rank_sum_p([1.0, 2.0], [3.0, 4.0])
    assert abs(exact - 1 / 3) < 1e-12

    corr = gs.pearson_matrix(xz, sig["genes"][:3])
    assert len(corr) == 3 and all(abs(corr[i][i] - 1.0) < 1e-12 for i in range(3))

    with tempfile.TemporaryDirectory() as tmp:
        model_path = Path(tmp) / "model.json"
        net.save(model_path)
        reloaded = gs.DenseNetwork.load(model_path)
        assert reloaded.predict(xz) == predictions

        expr_path = Path(tmp) / "expression.csv"
        labels_path = Path(tmp) / "labels.csv"
        x.save(expr_path)
        gs.save_labels(x.sample_ids, y, labels_path)
        x2, y2, dropped_unlabeled, dropped_unmeasured = gs.load_expression(expr_path, labels_path)
        assert dropped_unlabeled == 0 and dropped_unmeasured == 0
        assert x2.rows() == x.rows() and y2.labels == y.labels

    try:
        gs.rank_sum_test([], [1.0])
    except ValueError as e:
        assert "insufficient_samples" in str(e) or "config" in str(e), e
    else:
        sys.exit("expected ValueError for an empty sample")

    print("OK")


if __name__ == "__main__":
    main()
