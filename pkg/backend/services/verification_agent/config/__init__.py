# Configuration module for the Verification Agent
