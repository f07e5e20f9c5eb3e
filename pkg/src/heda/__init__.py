"""Privacy-preserving logistic regression mixing homomorphic encryption and differential privacy."""
