"""rlprobe: train a pixel RL agent, learn an agent-aware generative model of
its state space, and optimize the latent space to synthesize states of
interest (high/low reward, critical decisions, forced actions)."""

import os

# The tensor workloads here are many small GEMMs; threaded BLAS is a net loss.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
try:
    from threadpoolctl import threadpool_limits as _tp_limits

    _tp_limits(limits=1)
except Exception:
    pass

__version__ = "0.1.0"
