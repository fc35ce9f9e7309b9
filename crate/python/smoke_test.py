"""Smoke test for the ladder_sim_py extension.

Build and install first:
    maturin build --release -m crates/python/Cargo.toml -o dist && pip install dist/*.whl
"""

import json
import sys
import tempfile

import ladder_sim_py as ls


def main():
    assert [ls.ladder_qubit_count(n) for n in range(1, 7)] == [2 * n * n + 4 * n - 1 for n in range(1, 7)]
    assert ls.Layout.ladder(2).n_qubits == 15

    params = ls.Params(eta_br=20.0)
    proto = ls.Protocol("cz", params)
    layout = proto.layout
    controls = proto.naive_controls()
    print(f"cz on {layout.name}: {controls.n_slots} slots, {controls.duration:.1f} ns")

    # clean evolution hits the target
    psi0 = proto.initial_state(0.5)
    final, drift = ls.evolve_state(psi0, layout, params, ls.Disorder.zero(layout), controls)
    f = ls.state_fidelity(proto.target_state(params, 0.5), final)
    print(f"clean fidelity at p=0.5: {f:.5f}, norm drift {drift:.1e}")
    assert f > 0.98 and drift < 1e-10

    # controls survive a JSON round trip
    again = ls.Controls.from_json(controls.to_json())
    assert again.amplitudes == controls.amplitudes

    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    clean = ls.averaged_fidelity(proto, params, ls.Disorder.zero(layout), controls, grid)
    assert min(e[2] for e in clean.entries) > 0.98

    reals = [ls.Disorder.sample(layout, params, 0.02, s) for s in range(8)]
    noisy = ls.ensemble_fidelity(proto, params, controls, grid, reals, metric="averaged_state")
    print(f"2% disorder: {noisy!r}")
    assert noisy.mean < clean.mean

    result = ls.optimize(proto, params, reals[0], controls, max_iters=5)
    print(f"grape: {result.iterations} iterations, cost {result.cost_trajectory[0]:.4f} -> {result.final_cost:.4f}")
    assert result.final_cost < result.cost_trajectory[0]

    with tempfile.TemporaryDirectory() as out:
        config = 'kind = "disorder_sweep"\nn_samples = 2\np_grid = [0.0, 1.0]\n[sweep]\nprotocols = ["cz"]\nepsilons = [0.0, 0.01]\n'
        manifest = json.loads(ls.run_experiment(config, out))
        print(f"sweep wrote {len(manifest['outputs'])} files")
        assert manifest["outputs"]

    try:
        ls.Params(eta_br=-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative eta accepted")

    print("ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
