# carnet-sim application package
