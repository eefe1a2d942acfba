"""Benchmark domains: a one-dimensional corridor and a grid map."""
