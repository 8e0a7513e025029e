"""Incremental thresholded mincost flow with an approximate maxflow driver."""

from dynflow.graph import Circulation, DynGraph, Edge, GraphError
from dynflow.ipm import IpmError, ThresholdRun
from dynflow.maxflow import MaxflowError, MaxflowRun
from dynflow.params import Params
from dynflow.report import RunReport, bench_scaling
from dynflow.streams import StreamError, UpdateStream, generate_stream

__all__ = [
    "Circulation", "DynGraph", "Edge", "GraphError",
    "IpmError", "ThresholdRun",
    "MaxflowError", "MaxflowRun",
    "Params",
    "RunReport", "bench_scaling",
    "StreamError", "UpdateStream", "generate_stream",
]

__version__ = "0.1.0"
