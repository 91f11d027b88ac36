import json
from dataclasses import replace

import numpy as np
import pytest
import torch
from torch import nn

from pqcexpr.core.errors import DataError, NumericalError, SchemaError
from pqcexpr.gnn.checkpoint import checkpoint_document, load_checkpoint, save_checkpoint
from pqcexpr.gnn.model import (
    GnnModel,
    GnnRegressor,
    ModelConfig,
    SageLayer,
    adam_step,
    backward,
    collate,
    huber_loss,
    model_forward,
    mp_layer_forward,
    predict,
)
from pqcexpr.gnn.train import TrainConfig, evaluate_loss, split_dataset, target_scaling, train
from pqcexpr.graph import D_GLOBAL, D_NODE, CircuitGraph, NormStats, apply_normalizer, encode, fit_normalizer
from pqcexpr.models.circuit import ParameterizedCircuit
from pqcexpr.sources import RandomCircuitSource


def perturbed_network(config, seed):
    """Network with glorot weights and small random biases."""
    network = GnnRegressor(config)
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, param in network.named_parameters():
            if name.endswith("bias"):
                param.add_(0.1 * torch.randn(param.shape, generator=generator, dtype=param.dtype))
    return network


def normalized_batch(graphs, neighborhood="symmetric"):
    stats = fit_normalizer(graphs) if len(graphs) > 1 else NormStats.identity()
    return collate([apply_normalizer(graph, stats) for graph in graphs], neighborhood)


def loss_value(network, batch):
    with torch.no_grad():
        return huber_loss(network(batch), batch.y, network.config.huber_delta).item()


def finite_difference_check(network, batch, eps=1e-5, entries=3):
    grads = backward(batch, network)
    picker = np.random.default_rng(0)
    checked = skipped = 0
    for name, param in network.named_parameters():
        flat = param.data.view(-1)
        for k in picker.choice(flat.numel(), size=min(entries, flat.numel()), replace=False):
            original = flat[k].item()
            values = []
            for shift in (eps, 0.0, -eps):
                flat[k] = original + shift
                values.append(loss_value(network, batch))
            flat[k] = original
            plus, centre, minus = values
            # stencil straddles a ReLU or Huber kink
            if abs(plus - 2 * centre + minus) > 1e-8:
                skipped += 1
                continue
            numeric = (plus - minus) / (2 * eps)
            analytic = grads[name].view(-1)[k].item()
            assert abs(numeric - analytic) <= 1e-4 * max(abs(numeric), abs(analytic)) + 1e-7, name
            checked += 1
    return checked, skipped


def labeled(graphs, rng, scale=2.0):
    return [replace(graph, label=float(scale * rng.normal())) for graph in graphs]


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_gradients_match_finite_differences(seed, small_config):
    rng = np.random.default_rng(seed)
    source = RandomCircuitSource(count=3, max_qubits=3, max_depth=8, seed=seed)
    graphs = labeled([encode(item.circuit) for item in source.generate()], rng)
    neighborhood = "symmetric" if seed % 2 == 0 else "in"
    config = small_config.model_copy(update={"init_seed": seed, "neighborhood": neighborhood})
    checked, skipped = finite_difference_check(perturbed_network(config, seed), normalized_batch(graphs, neighborhood))
    assert checked > 3 * skipped


def test_neighbor_mean_gradient_on_two_node_graph(small_config):
    graph = encode(ParameterizedCircuit(num_qubits=1), label=0.7)
    assert graph.num_nodes == 2
    batch = collate([graph])
    checked, _ = finite_difference_check(perturbed_network(small_config, 9), batch)
    assert checked > 0


def test_zero_residual_gives_zero_gradients(random_graphs, small_config):
    network = perturbed_network(small_config, 1)
    batch = normalized_batch(random_graphs)
    with torch.no_grad():
        batch.y = network(batch).clone()
    for grad in backward(batch, network).values():
        assert torch.all(grad == 0)


def test_weight_decay_enters_the_gradient(random_graphs, small_config):
    network = perturbed_network(small_config, 2)
    batch = normalized_batch(random_graphs)
    plain = backward(batch, network)
    decayed = backward(batch, network, weight_decay=0.1)
    for name, param in network.named_parameters():
        assert torch.allclose(decayed[name] - plain[name], 0.1 * param.detach())


def test_non_finite_loss_is_reported(random_graphs, small_config):
    network = GnnRegressor(small_config)
    with torch.no_grad():
        network.head[-1].bias.fill_(float("nan"))
    with pytest.raises(NumericalError) as err:
        backward(normalized_batch(random_graphs), network)
    assert err.value.stage == "loss"


def test_huber_loss_branches():
    zero = torch.zeros(1, dtype=torch.float64)
    assert huber_loss(zero, zero).item() == 0.0
    assert huber_loss(torch.tensor([0.5], dtype=torch.float64), zero).item() == pytest.approx(0.125)
    assert huber_loss(torch.tensor([2.0], dtype=torch.float64), zero).item() == pytest.approx(1.5)
    with pytest.raises(ValueError):
        huber_loss(torch.zeros(2, dtype=torch.float64), zero)


def test_zero_layer_gives_zero_output(bell_like):
    layer = SageLayer(D_NODE, 5)
    with torch.no_grad():
        for param in layer.parameters():
            param.zero_()
    graph = encode(bell_like)
    out = mp_layer_forward(graph, torch.from_numpy(graph.node_features), layer)
    assert out.shape == (graph.num_nodes, 5)
    assert torch.all(out == 0)


def test_isolated_node_keeps_its_features(rng):
    x = np.abs(rng.normal(size=(1, D_NODE)))
    graph = CircuitGraph(x, np.zeros((0, 2), dtype=np.int64), np.zeros(D_GLOBAL))
    layer = SageLayer(D_NODE, D_NODE)
    with torch.no_grad():
        layer.lin_root.weight.copy_(torch.eye(D_NODE, dtype=torch.float64))
        layer.lin_root.bias.zero_()
    out = mp_layer_forward(graph, torch.from_numpy(x), layer)
    assert torch.allclose(out, torch.from_numpy(x))


def test_star_center_hears_the_neighbor_mean(rng):
    leaf = np.abs(rng.normal(size=D_NODE))
    x = np.vstack([rng.normal(size=D_NODE), leaf, leaf, leaf])
    graph = CircuitGraph(x, np.array([[1, 0], [2, 0], [3, 0]]), np.zeros(D_GLOBAL))
    layer = SageLayer(D_NODE, D_NODE)
    with torch.no_grad():
        layer.lin_root.weight.zero_()
        layer.lin_root.bias.zero_()
        layer.lin_neigh.weight.copy_(torch.eye(D_NODE, dtype=torch.float64))
    out = mp_layer_forward(graph, torch.from_numpy(x), layer, neighborhood="in")
    assert torch.allclose(out[0], torch.from_numpy(leaf), atol=1e-15)
    assert torch.all(out[1:] == 0)


def test_layer_rejects_wrong_row_count(bell_like):
    graph = encode(bell_like)
    with pytest.raises(ValueError):
        mp_layer_forward(graph, torch.zeros(3, D_NODE, dtype=torch.float64), SageLayer(D_NODE, 4))


def test_forward_shapes_and_dtype(random_graphs):
    network = GnnRegressor(ModelConfig())
    out = network(normalized_batch(random_graphs))
    assert out.shape == (len(random_graphs),)
    assert out.dtype == torch.float64
    assert ModelConfig().d_fused == 96


def test_prediction_is_node_permutation_invariant(small_config, rng):
    graphs = [encode(item.circuit) for item in RandomCircuitSource(count=100, max_qubits=4, max_depth=20, seed=21).generate()]
    model = GnnModel(perturbed_network(small_config, 4), fit_normalizer(graphs), small_config)
    for graph in graphs:
        perm = rng.permutation(graph.num_nodes)
        inverse = np.argsort(perm)
        permuted = CircuitGraph(graph.node_features[perm], inverse[graph.edges], graph.global_features)
        original, shuffled = model.predict_graphs([graph, permuted])
        assert shuffled == pytest.approx(original, abs=1e-9)


def test_batched_and_single_predictions_agree(random_graphs, small_config):
    model = GnnModel(perturbed_network(small_config, 5), fit_normalizer(random_graphs), small_config)
    batched = model.predict_graphs(random_graphs)
    singles = [model.predict_graphs([graph])[0] for graph in random_graphs]
    assert np.allclose(batched, singles, atol=1e-12)


def test_predict_matches_model_forward(build, random_graphs, small_config):
    model = GnnModel(perturbed_network(small_config, 6), fit_normalizer(random_graphs), small_config)
    circuit = build(3, ("RY", 0), ("CX", 0, 1), ("RX", 2), ("CX", 2, 0))
    expected = model_forward(model, apply_normalizer(encode(circuit), model.norm_stats))
    assert predict(model, circuit) == expected
    assert predict(model, circuit) == predict(model, circuit)
    with pytest.raises(SchemaError):
        predict(model, build(5, ("RX", 4)))


def scalar_network(value):
    network = nn.Linear(1, 1, bias=False, dtype=torch.float64)
    with torch.no_grad():
        network.weight.fill_(value)
    return network


@pytest.mark.parametrize("gradient, expected", [(0.5, 0.9), (-3.0, 1.1)])
def test_adam_first_step_moves_by_learning_rate(gradient, expected):
    network = scalar_network(1.0)
    optimizer = torch.optim.Adam(network.parameters(), lr=0.1)
    adam_step(optimizer, network, {"weight": torch.tensor([[gradient]], dtype=torch.float64)})
    assert network.weight.item() == pytest.approx(expected, abs=1e-7)


def test_adam_l2_decay_with_zero_gradient():
    network = scalar_network(1.0)
    optimizer = torch.optim.Adam(network.parameters(), lr=0.1, weight_decay=1e-6)
    adam_step(optimizer, network, {"weight": torch.zeros((1, 1), dtype=torch.float64)})
    # g = 1e-6 * w, so the step is lr * g / (|g| + 1e-8)
    assert network.weight.item() == pytest.approx(1 - 0.1 / 1.01, abs=1e-9)


def test_split_dataset(random_graphs):
    train_part, val_part = split_dataset(random_graphs, 0.8, seed=3)
    assert (len(train_part), len(val_part)) == (16, 4)
    ids = {graph.circuit_id for graph in train_part} | {graph.circuit_id for graph in val_part}
    assert len(ids) == 20
    again, _ = split_dataset(random_graphs, 0.8, seed=3)
    assert [graph.circuit_id for graph in again] == [graph.circuit_id for graph in train_part]
    with pytest.raises(DataError):
        split_dataset(random_graphs[:1], 0.8, seed=3)


def test_training_needs_labels(random_graphs, small_config):
    graphs = list(random_graphs)
    graphs[3] = replace(graphs[3], label=None)
    with pytest.raises(DataError) as err:
        train(graphs, TrainConfig(epochs=1), small_config)
    assert graphs[3].circuit_id in str(err.value)


def test_constant_label_is_learned(random_graphs, small_config):
    graphs = [replace(graph, label=1.0) for graph in random_graphs[:10]]
    _, history = train(graphs, TrainConfig(epochs=50, learning_rate=1e-2, batch_size=8), small_config)
    assert history.records[49].train_loss < 0.1 * history.records[0].train_loss


def test_history_and_scheduler_contract(random_graphs, small_config):
    config = TrainConfig(epochs=40, learning_rate=1e-2, batch_size=4, scheduler_patience=0)
    _, history = train(random_graphs, config, small_config)
    assert len(history) == 40
    frame = history.to_frame()
    assert list(frame.columns) == ["epoch", "train_loss", "val_loss", "lr"]
    assert frame["epoch"].tolist() == list(range(1, 41))
    rates = history.learning_rates
    assert rates[0] == 1e-2
    for before, after in zip(rates, rates[1:]):
        assert after == before or after == pytest.approx(0.1 * before, rel=1e-12)
    assert all(record.val_rmse >= 0 for record in history.records)


def test_training_returns_best_validation_model(random_graphs, small_config):
    config = TrainConfig(epochs=15, learning_rate=5e-3, batch_size=8, seed=2)
    model, history = train(random_graphs, config, small_config)
    train_raw, val_raw = split_dataset(random_graphs, config.train_fraction, config.seed)
    expected_stats = fit_normalizer(train_raw)
    assert np.array_equal(model.norm_stats.node_mean, expected_stats.node_mean)
    val_loss, _ = evaluate_loss(model.network, [apply_normalizer(g, model.norm_stats) for g in val_raw], config.batch_size)
    assert val_loss == pytest.approx(min(record.val_loss for record in history.records), rel=1e-12)


def test_training_is_deterministic(random_graphs, small_config):
    config = TrainConfig(epochs=5, learning_rate=1e-3, batch_size=8, seed=1)
    model_a, history_a = train(random_graphs, config, small_config)
    model_b, history_b = train(random_graphs, config, small_config)
    assert history_a.records == history_b.records
    assert json.dumps(checkpoint_document(model_a)) == json.dumps(checkpoint_document(model_b))


@pytest.fixture
def trained(random_graphs, small_config):
    model, _ = train(random_graphs, TrainConfig(epochs=3, learning_rate=1e-3, batch_size=8), small_config)
    return model


def test_checkpoint_round_trip_is_bit_exact(trained, random_graphs, tmp_path):
    path = save_checkpoint(trained, tmp_path / "model.json")
    restored = load_checkpoint(path)
    assert np.array_equal(restored.predict_graphs(random_graphs), trained.predict_graphs(random_graphs))
    assert restored.config == trained.config
    assert restored.train_config == trained.train_config
    save_checkpoint(restored, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_checkpoint_version_mismatch(trained, tmp_path):
    document = checkpoint_document(trained)
    document["schema_version"] = "0"
    path = tmp_path / "old.json"
    path.write_text(json.dumps(document))
    with pytest.raises(SchemaError) as err:
        load_checkpoint(path)
    assert "schema_version" in str(err.value)


def test_checkpoint_shape_mismatch(trained, tmp_path):
    document = checkpoint_document(trained)
    document["weights"]["head.2.bias"] = [0.0, 0.0]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(document))
    with pytest.raises(SchemaError):
        load_checkpoint(path)


def test_checkpoint_file_problems(tmp_path):
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "missing.json")
    corrupt = tmp_path / "corrupt.json"
    corrupt.write_text("{not json")
    with pytest.raises(DataError):
        load_checkpoint(corrupt)


def test_zero_model_predicts_zero_after_reload(random_graphs, small_config, tmp_path):
    network = GnnRegressor(small_config)
    with torch.no_grad():
        for param in network.parameters():
            param.zero_()
    model = GnnModel(network, NormStats.identity(), small_config)
    restored = load_checkpoint(save_checkpoint(model, tmp_path / "zero.json"))
    assert np.all(restored.predict_graphs(random_graphs) == 0)


def test_target_scaling(bell_like):
    graphs = [encode(bell_like, label=label) for label in (0.0, 0.0, 0.0, 10.0)]
    shift, scale = target_scaling(graphs)
    assert shift == 2.5
    assert scale == pytest.approx(np.sqrt(75 / 4))
    assert target_scaling([encode(bell_like, label=0.3)] * 3) == (pytest.approx(0.3), 1.0)


def test_output_scaling_maps_head_to_label_units(random_graphs, small_config):
    network = GnnRegressor(small_config)
    with torch.no_grad():
        for param in network.parameters():
            param.zero_()
    network.set_output_scaling(1.5, 4.0)
    assert np.all(network(normalized_batch(random_graphs)).detach().numpy() == 1.5)
    with pytest.raises(ValueError):
        network.set_output_scaling(0.0, 0.0)


def test_training_fits_output_scaling_on_the_training_split(random_graphs, small_config):
    config = TrainConfig(epochs=2, learning_rate=1e-3, batch_size=8, seed=3)
    spread = [replace(graph, label=graph.label * 20) for graph in random_graphs]
    model, _ = train(spread, config, small_config)
    train_raw, _ = split_dataset(spread, config.train_fraction, config.seed)
    shift, scale = target_scaling(train_raw)
    assert model.network.output_shift.item() == shift
    assert model.network.output_scale.item() == scale
    assert scale > 1.0

    plain, _ = train(spread, config.model_copy(update={"standardize_target": False}), small_config)
    assert plain.network.output_shift.item() == 0.0
    assert plain.network.output_scale.item() == 1.0
