# Test module for CR Calculus
