# src/pipeline — Pretraining, episodic adaptation, evaluation and reports
