# Evaluation, sweep plotting and throughput benchmarking
