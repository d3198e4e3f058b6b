namespace debiascope {}
