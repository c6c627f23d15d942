"""pii-forge: distant-supervision PII annotation, partial-credit NER
evaluation, and federated training simulation over parallel
infobox/free-text records."""

__version__ = "0.1.0"
