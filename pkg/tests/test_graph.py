import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pals.graph import (
    BinningError,
    ContactEvent,
    ContactNetwork,
    FormatError,
    SbmConfig,
    build_network_from_contacts,
    generate_sbm,
    quintile_bin,
    read_contacts,
    read_network,
    write_contacts,
    write_edges,
    write_nodes,
)


def test_sbm_complete_blocks():
    net = generate_sbm(SbmConfig((3, 3), 1.0, 0.0, seed=1))
    assert np.all(net.degrees == 2)
    net.validate()


def test_sbm_empty():
    net = generate_sbm(SbmConfig((5, 7), 0.0, 0.0, seed=2))
    assert net.degrees.sum() == 0


def test_sbm_within_block_degree_moments():
    # mean within-block degree of a 250-node block is Binomial(249, 0.5) averaged over nodes
    means = []
    for seed in range(30):
        net = generate_sbm(SbmConfig((250, 250), 0.5, 0.01, seed=seed))
        within = [np.sum((nb < 250) == (i < 250)) for i, nb in enumerate(net.neighbors)]
        means.append(np.mean(within))
    # each node's degree has sd sqrt(249/4); edges are shared so use the per-node sd as a loose bound
    sd = np.sqrt(249 * 0.25)
    assert abs(np.mean(means) - 0.5 * 249) <= 3 * sd / np.sqrt(30)


def test_sbm_deterministic_and_symmetric():
    a = generate_sbm(SbmConfig((20, 30), 0.3, 0.05, seed=9))
    b = generate_sbm(SbmConfig((20, 30), 0.3, 0.05, seed=9))
    assert all(np.array_equal(x, y) for x, y in zip(a.neighbors, b.neighbors))
    a.validate(symmetric=True)


def test_sbm_config_validation():
    with pytest.raises(ValueError):
        SbmConfig((), 0.5, 0.1)
    with pytest.raises(ValueError):
        SbmConfig((5,), 1.5, 0.1)


def ev(a, b, day, ch="room"):
    return ContactEvent(a, b, day, ch)


def neighbor_ids(net, node):
    i = net.ids.index(node)
    return [net.ids[j] for j in net.neighbors[i]]


def test_contacts_examples():
    net = build_network_from_contacts([ev("A", "B", 3)], "room", {"A": 5})
    assert neighbor_ids(net, "A") == ["B"]
    assert not net.is_main[net.ids.index("B")]

    net = build_network_from_contacts([ev("A", "B", 3)], "room", {"A": 2})
    assert neighbor_ids(net, "A") == []

    net = build_network_from_contacts([ev("A", "B", 3), ev("A", "B", 4)], "room", {"A": 5})
    assert neighbor_ids(net, "A") == ["B"]
    assert net.contact_days[net.ids.index("A")].tolist() == [4]


def test_contacts_channel_filter_and_symmetry():
    events = [ev("A", "B", 1), ev("A", "C", 1, "nurse"), ev("B", "D", 9)]
    net = build_network_from_contacts(events, "room", {"A": 5, "B": 5})
    assert neighbor_ids(net, "A") == ["B"]
    assert neighbor_ids(net, "B") == ["A"]  # D is past B's cutoff


def test_contacts_unknown_main_rejected():
    with pytest.raises(ValueError):
        build_network_from_contacts([ev("X", "B", 1)], "room", {"A": 5})
    with pytest.raises(ValueError):
        ContactEvent("A", "A", 1, "room")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 9), st.integers(0, 20)), max_size=40),
       st.lists(st.integers(0, 20), min_size=6, max_size=6))
def test_contacts_never_exceed_cutoff(raw, cutoffs):
    events = [ev(f"m{a}", f"n{b}" if b > 5 else f"m{b}", d) for a, b, d in raw if not (b <= 5 and a == b)]
    cut = {f"m{k}": c for k, c in enumerate(cutoffs)}
    net = build_network_from_contacts(events, "room", cut)
    for i in net.main_indices:
        assert np.all(net.contact_days[i] <= cut[net.ids[i]])
    net.validate(symmetric=False)


def test_quintile_examples():
    vals = np.arange(1, 101, dtype=float)
    raw = np.r_[vals, 50.0, -10.0, 1000.0]
    mask = np.r_[np.ones(100, bool), np.zeros(3, bool)]
    out = quintile_bin(raw, mask)
    assert out[100].tolist() == [0, 0, 1, 0, 0]
    assert out[101].tolist() == [1, 0, 0, 0, 0]
    assert out[102].tolist() == [0, 0, 0, 0, 1]
    assert np.all(out.sum(1) == 1)


def test_quintile_boundary_tie_goes_low():
    train = np.arange(1, 11, dtype=float)
    bounds = np.sort(train)[[1, 3, 5, 7]] + np.array([0.8, 0.6, 0.4, 0.2])  # sorted-order quantile oracle
    assert np.allclose(bounds, [2.8, 4.6, 6.4, 8.2])
    out = quintile_bin(np.r_[train, 4.6], np.r_[np.ones(10, bool), False])
    assert out[-1].tolist() == [0, 1, 0, 0, 0]


def test_quintile_too_few_values():
    with pytest.raises(BinningError, match="age"):
        quintile_bin([1, 2, 3, 4, 1, 2], np.ones(6, bool), name="age")


def test_network_file_round_trip(tmp_path):
    net = generate_sbm(SbmConfig((4, 4), 0.8, 0.2, seed=3))
    net = net.with_features(np.random.default_rng(0).integers(0, 2, (8, 3)))
    write_nodes(net, tmp_path / "n.csv")
    write_edges(net, tmp_path / "e.csv")
    back = read_network(tmp_path / "n.csv", tmp_path / "e.csv")
    assert back.ids == net.ids
    assert np.array_equal(back.features, net.features)
    assert all(np.array_equal(a, b) for a, b in zip(back.neighbors, net.neighbors))


def test_network_file_errors_are_anchored(tmp_path):
    (tmp_path / "n.csv").write_text("id,role,f1\na,main,0\nb,main,2\n")
    (tmp_path / "e.csv").write_text("src,dst\na,b\n")
    with pytest.raises(FormatError, match=r"row 3 column 'f1'"):
        read_network(tmp_path / "n.csv", tmp_path / "e.csv")
    (tmp_path / "n.csv").write_text("id,role,f1\na,main,0\nb,main,1\n")
    (tmp_path / "e.csv").write_text("src,dst\na,zz\n")
    with pytest.raises(FormatError, match="unknown node id"):
        read_network(tmp_path / "n.csv", tmp_path / "e.csv")


def test_contacts_file_round_trip(tmp_path):
    events = [ev("A", "B", 3), ev("A", "C", 4, "nurse")]
    write_contacts(events, tmp_path / "c.csv")
    assert read_contacts(tmp_path / "c.csv") == events
    (tmp_path / "bad.csv").write_text("main_id,neighbor_id,day,channel\nA,B,x,room\n")
    with pytest.raises(FormatError, match="row 2"):
        read_contacts(tmp_path / "bad.csv")


def test_contact_network_validate():
    net = ContactNetwork(["a", "b"], np.zeros((2, 1)), [[1], []], [True, True])
    with pytest.raises(ValueError, match="asymmetric"):
        net.validate()
    net = ContactNetwork(["a", "b"], np.zeros((2, 1)), [[0], []], [True, False])
    with pytest.raises(ValueError, match="self-loop"):
        net.validate()
