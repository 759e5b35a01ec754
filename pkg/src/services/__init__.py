"""Run orchestration and artifact export."""
