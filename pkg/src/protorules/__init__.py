"""protorules: learning probabilistic relational planning rules across
related tasks, with a transferable rule-set prior."""

__version__ = "0.1.0"
