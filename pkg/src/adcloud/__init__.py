"""Desk-scale autonomous-driving cloud.

One shared substrate (a multi-process dataflow engine plus a tiered block
store) hosting three services: replay simulation of sensor logs through
external processes, synchronous data-parallel training with a storage-backed
parameter server, and HD-map generation (pose fusion, ICP stitching, grid
rasterization, semantic labeling).
"""

__version__ = "0.1.0"
