mod oracles;

use oracles::gradcheck::{self, TOLERANCE};

const CASES: usize = 100;

macro_rules! op_test {
    ($name:ident, $check:path, $seed:expr) => {
        #[test]
        fn $name() {
            let c = $check(CASES, $seed);
            assert_eq!(c.cases, CASES);
            assert!(c.worst < TOLERANCE, "{}: worst relative error {:e}", c.op, c.worst);
        }
    };
}

op_test!(conv1d_gradients, gradcheck::conv1d_check, 11);
op_test!(conv2d_gradients, gradcheck::conv2d_check, 12);
op_test!(batchnorm_gradients, gradcheck::batchnorm_check, 13);
op_test!(gem_gradients, gradcheck::gem_check, 14);
op_test!(linear_gradients, gradcheck::linear_check, 15);
op_test!(bce_gradients, gradcheck::bce_check, 16);
op_test!(fusion_gradients, gradcheck::fusion_check, 17);
op_test!(pooling_gradients, gradcheck::pooling_check, 18);

#[test]
fn stage1_network_gradients() {
    let c = gradcheck::effnet_check(4, 21);
    assert!(c.worst < TOLERANCE, "worst relative error {:e}", c.worst);
}

#[test]
fn stage2_network_gradients() {
    let c = gradcheck::cnn14_check(2, 22);
    assert!(c.worst < TOLERANCE, "worst relative error {:e}", c.worst);
}
