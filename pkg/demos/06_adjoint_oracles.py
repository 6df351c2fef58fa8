"""Three independent gradient routes through the same pipeline: the tape,
the analytic adjoints, and central finite differences."""

import numpy as np

import topofield as tf
from topofield import Tape
from topofield import oracle

nelx, nely = 5, 4
mesh = tf.build_mesh(nelx, nely)
mat = tf.MaterialModel()
left = np.array([mesh.node_id(0, i) for i in range(nely + 1)])
fixed = np.concatenate([2 * left, 2 * left + 1])
f = np.zeros(mesh.n_dofs)
f[2 * mesh.node_id(nelx, 0) + 1] = -1.0
params = tf.FilterParams()
agg = tf.StressAggregate(sigma_allow=1.5, exponent=8.0)

rng = np.random.default_rng(0)
b0 = rng.uniform(0.2, 0.8, nelx * nely)


def forward(bv):
    tape = Tape()
    b = tape.leaf(bv)
    rho = tf.apply_filter(b, nelx, nely, params)
    u, system = tf.assemble_and_solve(rho, mesh, mat, fixed, f)
    stress = tf.fea.centroid_stress(u, rho, mesh, mat)
    pn = tf.fea.p_norm_stress(stress, agg)
    return tape, b, system, stress, tf.compliance(u, f), pn


def report(name, tape_grad, adjoint_grad, fd_grad):
    na = np.linalg.norm(tape_grad)
    print(f"{name:12s} |tape - adjoint| / |tape| = "
          f"{np.linalg.norm(tape_grad - adjoint_grad) / na:.2e}   "
          f"|tape - fd| / |tape| = {np.linalg.norm(tape_grad - fd_grad) / na:.2e}")


# compliance route
tape, b, system, stress, c, pn = forward(b0)
g_tape = tape.backward(c).of(b)
g_adj = oracle.filter_adjoint_gradient(
    b0.reshape(nely, nelx),
    oracle.compliance_density_gradient(system).reshape(nely, nelx),
    params,
).ravel()
fd = oracle.finite_difference_gradient(lambda x: float(forward(x)[4].value), b0.copy(), 1e-6)
report("compliance", g_tape, g_adj, fd)

# stress route
tape, b, system, stress, c, pn = forward(b0)
g_tape = tape.backward(pn).of(b)
g_adj = oracle.filter_adjoint_gradient(
    b0.reshape(nely, nelx),
    oracle.stress_adjoint_gradient(system, stress, agg, mat).reshape(nely, nelx),
    params,
).ravel()
fd = oracle.finite_difference_gradient(lambda x: float(forward(x)[5].value), b0.copy(), 1e-6)
report("stress p-norm", g_tape, g_adj, fd)

# volume route (the filter adjoint alone)
tape, b, system, stress, c, pn = forward(b0)
rho_sum = None
tape2 = Tape()
b2 = tape2.leaf(b0)
g_tape = tape2.backward(tf.apply_filter(b2, nelx, nely, params).sum()).of(b2)
g_adj = oracle.filter_adjoint_gradient(
    b0.reshape(nely, nelx), np.ones((nely, nelx)), params
).ravel()
fd = oracle.finite_difference_gradient(
    lambda x: float(tf.apply_filter(x, nelx, nely, params).sum()), b0.copy(), 1e-6
)
report("volume", g_tape, g_adj, fd)
