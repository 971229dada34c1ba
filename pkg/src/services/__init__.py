# Channel, precoding, quantization, estimation, training and experiment services
