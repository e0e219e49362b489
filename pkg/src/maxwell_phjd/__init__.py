"""Two-level preconditioned Helmholtz-Jacobi-Davidson solver for Maxwell cavity eigenproblems."""
