import numpy as np

from fedht.config import parse_config
from fedht.data import Dataset
from fedht.models import QuadraticModel
from fedht.tasks import Task


def quadratic_cfg(T=500, n=10, S=5, E=5, comp="{kind: identity}", seed=0, extra=""):
    return parse_config(f"""
n: {n}
S: {S}
E: {E}
T: {T}
seed: {seed}
batch_size: 5
model: {{kind: quadratic}}
data: {{kind: quadratic, dim: 8, mu: 0.5, L: 2.0, samples_per_client: 40, noise: 1.0, heterogeneity: 1.0, x0_scale: 2.0}}
compressor: {comp}
stepsize: {{kind: inverse_proportional, beta: 2.0, b: 20.0}}
{extra}
""")


def blobs_cfg(T=500, n=10, S=5, E=5, comp="{kind: identity}", seed=0, extra="", batch=20):
    return parse_config(f"""
n: {n}
S: {S}
E: {E}
T: {T}
seed: {seed}
batch_size: {batch}
model: {{kind: logistic}}
data: {{kind: blobs, samples: 600, features: 6, classes: 4, separation: 1.0, labels_per_client: 2}}
compressor: {comp}
stepsize: {{kind: inverse_proportional, beta: 100, b: 1000}}
{extra}
""")


def hand_task(A, x0, x_star=None):
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    x_star = np.zeros(d) if x_star is None else np.asarray(x_star, float)
    ds = Dataset(np.zeros((1, d)), np.zeros(1, dtype=np.int64), 1)
    return Task(QuadraticModel(A, x_star), [ds], np.array([1.0]), ds, None, np.asarray(x0, float))
