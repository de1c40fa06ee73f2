"""Benchmarks: six-hump camel fitting and Lissajous path-tracking MPC."""
