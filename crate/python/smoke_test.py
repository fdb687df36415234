"""Smoke test for the gcnn extension module.

Build and install first, e.g. `pip install maturin && maturin develop -m crates/py/Cargo.toml`
or `maturin build -m crates/py/Cargo.toml` and install the wheel.
"""

import math

import gcnn


def check(cond, msg):
    if not cond:
        raise AssertionError(msg)


def main():
    names, values, labels = gcnn.grouped_ar(length=300, seed=4)
    check(len(names) == 12 and labels[:4] == [0, 0, 0, 0], "grouped_ar layout")

    inputs = [v for n, v in zip(names, values) if n != "g1s1"]
    truth = [l for n, l in zip(names, labels) if n != "g1s1"]
    found = gcnn.spectral_cluster(gcnn.similarity(inputs), 3, seed=0)
    relabel = {}
    check(all(relabel.setdefault(f, t) == t for f, t in zip(found, truth)), "clustering recovers groups")

    w = [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 2], [0, 0, 2, 0]]
    check(gcnn.ncut(w, gcnn.spectral_cluster(w, 2), 2) == 0.0, "disconnected graph has ncut 0")
    _, best = gcnn.brute_force_min_ncut(w, 2)
    check(best == 0.0, "brute force ncut")

    vals, vecs = gcnn.sym_eig([[2.0, 1.0], [1.0, 2.0]])
    check(abs(vals[0] - 1.0) < 1e-12 and abs(vals[1] - 3.0) < 1e-12, "eigenvalues")
    check(abs(abs(vecs[1][0]) - math.sqrt(0.5)) < 1e-12, "eigenvector")

    check(abs(gcnn.srmse([0.0, 2.0], [0.0, 0.0]) - math.sqrt(2.0)) < 1e-12, "srmse hand case")
    weights, intercept = gcnn.fit_ridge([[0.0], [1.0], [2.0]], [1.0, 3.0, 5.0], 0.0)
    check(abs(weights[0] - 2.0) < 1e-12 and abs(intercept - 1.0) < 1e-12, "ridge fit")

    kept, fixed, report = gcnn.repair_gaps(["a", "b"], [[0.0, None, 4.0], [1.0, 2.0, 3.0]])
    check(kept == ["a", "b"] and fixed[0][1] == 2.0 and len(report["fills"]) == 1, "gap repair")

    train, test, prep = gcnn.prepare(names, values, "g1s1", 16)
    check(len(train) + len(test) == 300 - 15 and len(prep["standardize"]["stats"]) == 12, "prepare")

    water = gcnn.ModelSpec.preset("water")
    check([g["width"] for g in water.geometry() if g["kind"] == "conv"] == [64, 16, 4, 1], "water plan")

    spec = gcnn.ModelSpec(11, 16, grouping="explicit", k=3, channels=2, dense=[8], pools=[1, 4])
    check(gcnn.ModelSpec.from_json(spec.to_json()).to_json() == spec.to_json(), "spec json round trip")
    model = gcnn.Model(spec, assignment=found, seed=1)
    check(model.param_count() > 0 and len(model.param_names()) > 0, "model parameters")
    best_model, best_epoch, history = gcnn.train(model, train, epochs=3, batch_size=8, learning_rate=0.01)
    check(len(history) == 3 and 1 <= best_epoch <= 3, "training history")
    report = best_model.evaluate(test)
    check(report["samples"] == len(test) and report["srmse"] is not None, "evaluation")

    restored = gcnn.Model.from_checkpoint(best_model.to_checkpoint())
    x = test.input(0)
    check(restored.predict(x) == best_model.predict(x), "checkpoint round trip")
    check(best_model.predict_set(test) == report["predictions"], "batch prediction")

    coeff = gcnn.Model(gcnn.ModelSpec(11, 64, grouping="coeff", k=3, channels=2, dense=[4]))
    check(all(abs(sum(r) - 1.0) < 1e-12 for r in coeff.coefficients()), "membership rows on the simplex")

    print("smoke test passed")


if __name__ == "__main__":
    main()
