"""Benchmark toolkit for classifying extreme vocal techniques in heavy metal recordings."""
