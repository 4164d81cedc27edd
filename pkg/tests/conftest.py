import threadpoolctl

# Small dense problems: threaded BLAS only adds sync overhead and breaks
# bitwise reproducibility, so the whole suite runs single-threaded kernels.
_limits = threadpoolctl.threadpool_limits(limits=1)
