# Limited-feedback FDD downlink precoding simulator
