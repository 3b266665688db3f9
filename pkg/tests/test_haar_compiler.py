import numpy as np
import pytest

from relu_compiler.errors import DomainMismatch, EmptyDomain, ParamsTooLoose, PlateauGainFailure
from relu_compiler.geometry import Hyperrectangle
from relu_compiler.haar import HaarFunction, TightenParams, compile_domain
from relu_compiler.haar_compiler import (
    INSIDE,
    REJECTED,
    WEDGE,
    assemble_haar,
    compile_cell,
    compile_haar,
    face_planes,
    measure_error,
    plateau_inset,
)
from relu_compiler.network import forward_batch, layer_outputs
from relu_compiler.samplers import GridSampler
from relu_compiler.verify import exclusion_check

PARAMS = TightenParams(0.05, 0.1)


def test_face_planes_order():
    cell = Hyperrectangle([0.0, 1.0], [2.0, 3.0])
    faces = face_planes(cell, 0.1)
    assert len(faces) == 4
    # lower faces first, each positive toward the cell
    assert faces[0].value([-0.1, 2.0]) == pytest.approx(0.0)
    assert faces[1].value([1.0, 0.9]) == pytest.approx(0.0)
    assert faces[2].value([2.1, 2.0]) == pytest.approx(0.0)
    assert faces[3].value([1.0, 3.1]) == pytest.approx(0.0)
    assert all(h.value(cell.center) > 0 for h in faces)


def test_structure(two_cells):
    assembly = assemble_haar(two_cells, PARAMS)
    net = assembly.network
    assert net.hidden_depth == 5
    assert net.widths == [4, 4, 4, 4, 4, 1]
    assert assembly.baseline == 0.0


def test_structure_in_one_dimension():
    f = HaarFunction([(Hyperrectangle([0.0], [1.0]), 2.0), (Hyperrectangle([1.0], [2.0]), -1.0)])
    assembly = assemble_haar(f, PARAMS)
    assert assembly.network.hidden_depth == 3
    assert assembly.network.widths == [4, 2, 4, 1]
    out = forward_batch(assembly.network, [[0.5], [1.5], [5.0], [-3.0]])[:, 0]
    assert out[0] == pytest.approx(2.0, abs=1e-9)
    assert out[1] == pytest.approx(-1.0, abs=1e-9)
    assert out[2:].tolist() == [0.0, 0.0]


def test_interval_module_is_exactly_zero_outside():
    module = compile_cell(Hyperrectangle([0.0], [1.0]), 3.0, TightenParams(0.1, 0.1))
    net = module.network()
    assert net.widths == [2, 1, 2, 1]
    assert forward_batch(net, [[0.5]])[0, 0] == pytest.approx(3.0, abs=1e-9)
    assert module.aggregate([[0.0], [1.0]]).tolist() == pytest.approx([0.1, 1.1])
    outside = [[5.0], [-5.0], [1.15], [-0.15]]
    assert exclusion_check(net, outside).ok
    right = layer_outputs(net, [[5.0]])
    assert right[0][0].tolist() == pytest.approx([5.1, 4.0])
    assert right[1][0].tolist() == [0.0]
    left = layer_outputs(net, [[-5.0]])
    assert left[0][0].tolist() == [0.0, 0.0]


def test_plateau_values(two_cells):
    net = compile_haar(two_cells, PARAMS)
    out = forward_batch(net, [[0.25, 0.5], [0.2, 0.2], [0.75, 0.5], [0.8, 0.8]])[:, 0]
    assert out == pytest.approx([1.0, 1.0, 4.0, 4.0], abs=1e-9)


def test_far_outside_is_zero(two_cells):
    assembly = assemble_haar(two_cells, PARAMS)
    X = np.array([[-3.0, -3.0], [5.0, 5.0], [0.5, 4.0], [-1.0, 0.5]])
    assert np.all(assembly.clean_outside(X))
    out = forward_batch(assembly.network, X)[:, 0]
    assert out.tolist() == [0.0] * 4


def test_baseline_is_opt_in(two_cells):
    assembly = assemble_haar(two_cells, PARAMS, baseline=True)
    assert assembly.baseline == 2.5
    out = forward_batch(assembly.network, [[9.0, 9.0], [0.25, 0.5], [0.75, 0.5]])[:, 0]
    assert out[0] == 2.5
    assert out[1:] == pytest.approx([1.0, 4.0], abs=1e-9)


def test_single_cell_matches_cell_module():
    cell = Hyperrectangle([0.0, 0.0], [1.0, 1.0])
    f = HaarFunction([(cell, 3.0)])
    net = compile_haar(f, PARAMS)
    module = compile_cell(cell, 3.0, PARAMS, compile_domain(f, PARAMS))
    X = np.random.default_rng(2).uniform(-1.0, 2.0, size=(500, 2))
    assert forward_batch(net, X)[:, 0] == pytest.approx(forward_batch(module.network(), X)[:, 0], abs=1e-12)
    assert forward_batch(net, [[5.0, 5.0], [-4.0, 0.5]])[:, 0].tolist() == [0.0, 0.0]


def test_aggregate_gradient_is_constant_on_the_plateau():
    cell = Hyperrectangle([0.0, 0.0], [1.0, 1.0])
    module = compile_cell(cell, 1000.0, PARAMS)
    X = np.random.default_rng(4).uniform(0.1, 0.9, size=(50, 2))
    grads = module.aggregate_gradient(X)
    assert grads.shape == (50, 2)
    assert np.array_equal(grads, np.broadcast_to(grads[0], grads.shape))
    step = 1e-4
    numeric = [(module.aggregate(X[:1] + step * e) - module.aggregate(X[:1] - step * e))[0] / (2 * step)
               for e in np.eye(2)]
    assert grads[0] == pytest.approx(numeric, rel=1e-6, abs=1e-8)
    # rejected points have a zero gradient
    assert module.aggregate_gradient([[5.0, 5.0]]).tolist() == [[0.0, 0.0]]


def test_regions(two_cells):
    assembly = assemble_haar(two_cells, PARAMS)
    regions = assembly.regions([[0.25, 0.5], [0.75, 0.5], [3.0, 3.0]])
    assert regions.tolist() == [[INSIDE, REJECTED], [REJECTED, INSIDE], [REJECTED, REJECTED]]
    module = assembly.modules[0]
    # on the first face plane itself the bundle is neither all-positive nor all-negative
    assert module.regions([[-0.05, 0.5]])[0] == WEDGE


def test_zero_valued_cell():
    f = HaarFunction([(Hyperrectangle([0.0, 0.0], [1.0, 1.0]), 0.0)])
    assembly = assemble_haar(f, PARAMS, baseline=False)
    assert assembly.modules[0].gain == 0.0
    out = forward_batch(assembly.network, [[0.5, 0.5], [0.01, 0.99], [3.0, 3.0]])[:, 0]
    assert out.tolist() == [0.0, 0.0, 0.0]


def test_negative_value():
    cell = Hyperrectangle([0.0, 0.0], [1.0, 1.0])
    module = compile_cell(cell, -3.0, PARAMS)
    out = forward_batch(module.network(), [[0.5, 0.5], [4.0, 4.0]])[:, 0]
    assert out[0] == pytest.approx(-3.0, abs=1e-9)
    assert out[1] == 0.0


def test_certified_gain():
    cell = Hyperrectangle([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(PlateauGainFailure):
        compile_cell(cell, 5.0, TightenParams(0.05, 0.1, plateau_gain=1e-6))
    auto = compile_cell(cell, 5.0, PARAMS)
    fixed = compile_cell(cell, 5.0, TightenParams(0.05, 0.1, plateau_gain=2 * auto.gain))
    assert fixed.gain == 2 * auto.gain


def test_cell_domain_must_contain_cell():
    cell = Hyperrectangle([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(DomainMismatch):
        compile_cell(cell, 1.0, PARAMS, Hyperrectangle([0.5, 0.5], [2.0, 2.0]))


def test_params_too_loose(two_cells):
    with pytest.raises(ParamsTooLoose):
        assemble_haar(two_cells, TightenParams(0.3))


def test_measure_error_within_bound(two_cells):
    assembly = assemble_haar(two_cells, PARAMS)
    sampler = GridSampler(two_cells.bounding_box(), 200)
    report = measure_error(assembly.network, two_cells, sampler, PARAMS)
    assert report.samples == 40_000
    assert report.seed is None
    assert 0.0 < report.l1_error <= report.bound
    assert report.within_bound
    assert report.l2_error > 0.0
    # unit-area domain: the mean absolute error cannot exceed the root mean square
    assert report.l1_error < report.l2_error
    assert report.to_dict()["l1_error"] == report.l1_error
    assert report.sampler["kind"] == "grid"


def test_measure_error_empty_domain(two_cells):
    net = compile_haar(two_cells, PARAMS)
    with pytest.raises(EmptyDomain):
        measure_error(net, two_cells, GridSampler(Hyperrectangle([5.0, 5.0], [6.0, 6.0]), 4))


def test_measure_error_dimension(two_cells, abs_net):
    with pytest.raises(DomainMismatch):
        measure_error(abs_net, two_cells)


def test_plateau_inset():
    cell = Hyperrectangle([0.0, 0.0], [1.0, 1.0])
    assert np.allclose(plateau_inset(cell, 0.05).lower, [0.1, 0.1])
    assert plateau_inset(cell, 0.3) is None
