//! Compares autodiff gradients of a small conv / bn / relu / upsample chain
//! against central finite differences.

use dwrseg::engine::gradcheck::{finite_diff_check, GradCheckConfig, GraphOp};
use dwrseg::engine::{BnRunning, ConvSpec, Graph, Mode, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dwrseg::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::randn([2, 3, 6, 6], 1.0, &mut rng);
    let w = Tensor::randn([4, 1, 3, 3], 0.5, &mut rng);
    let gamma = Tensor::channel_vector(vec![1.0, 0.8, 1.2]);
    let beta = Tensor::channel_vector(vec![0.0; 3]);

    let op = GraphOp(|g: &mut Graph, v: &[Var]| -> dwrseg::Result<Var> {
        let zeros = [0.0f32; 3];
        let ones = [1.0f32; 3];
        let running = BnRunning { mean: &zeros, var: &ones, eps: 1e-5 };
        let y = g.batch_norm("bn", v[0], v[2], v[3], Mode::Train, running)?;
        let y = g.relu(y);
        let (a, b) = (g.split(y, &[1, 2])?[0], v[1]);
        let y = g.conv2d(a, b, None, ConvSpec::new(1, 4, 3).dilation(2).padding(2))?;
        g.upsample(y, 12, 12)
    });
    let report = finite_diff_check(&op, &[x, w, gamma, beta], &GradCheckConfig::default())?;
    println!("{report:#?}");
    Ok(())
}
