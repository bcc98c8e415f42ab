"""Few-shot, news-driven stock trend prediction with denoise-then-vote aggregation."""

from trendvote.labels import ItemLabel, TrendLabel

__version__ = "0.1.0"

__all__ = ["ItemLabel", "TrendLabel", "__version__"]
